#include "lbl/protostore.hpp"

#include <algorithm>
#include <cstring>
#include <iostream>
#include <numeric>
#include <string>
#include <unordered_set>

#include "lbl/binio.hpp"

namespace lbl {

PrototypeStore::PrototypeStore(Matrix w) : w_(std::move(w)) { normalize_rows(w_); }

PrototypeStore PrototypeStore::restore(Matrix w, std::uint64_t version, SyncCounters counters) {
  PrototypeStore s;
  s.w_ = std::move(w);
  s.version_ = version;
  s.counters_ = counters;
  return s;
}

WorkingSet PrototypeStore::extract(std::vector<std::uint32_t> class_ids) {
  WorkingSet ws;
  ws.rows = Matrix(class_ids.size(), dim());
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    require(class_ids[i] < num_classes(), Errc::InvalidArgument,
            "class id " + std::to_string(class_ids[i]) + " out of range");
    std::copy_n(w_.row(class_ids[i]).begin(), dim(), ws.rows.row(i).begin());
  }
  ws.class_ids = std::move(class_ids);
  ws.origin_version = version_;
  counters_.rows_copied_out += ws.class_ids.size();
  return ws;
}

void PrototypeStore::write_back(const WorkingSet& ws, const Matrix& updated) {
  require(ws.origin_version == version_, Errc::StaleWorkingSet,
          "working set from version " + std::to_string(ws.origin_version) +
              " but store is at " + std::to_string(version_));
  require(updated.rows() == ws.class_ids.size() && updated.cols() == dim(), Errc::ShapeError,
          "updated slice shape mismatch");
  require(all_finite(updated.data()), Errc::NonFinite, "updated prototypes contain NaN/Inf");
  for (std::size_t i = 0; i < ws.class_ids.size(); ++i) {
    auto src = updated.row(i);
    if (std::memcmp(src.data(), ws.rows.row(i).data(), src.size_bytes()) == 0) continue;
    auto dst = w_.row(ws.class_ids[i]);
    std::copy(src.begin(), src.end(), dst.begin());
    l2_normalize_inplace(dst);
  }
  counters_.rows_written_back += ws.class_ids.size();
  ++version_;
}

PrototypeStore init_from_features(const Matrix& id_features, const Matrix& spot_features,
                                  PrototypeMode mode, std::vector<std::uint32_t>* fallbacks) {
  require(id_features.rows() == spot_features.rows() && id_features.cols() == spot_features.cols(),
          Errc::ShapeError, "ID and spot feature matrices differ in shape");
  Matrix w = id_features;
  if (mode == PrototypeMode::Avg) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
      auto r = w.row(i);
      auto s = spot_features.row(i);
      std::vector<double> mid(r.size());
      for (std::size_t c = 0; c < r.size(); ++c) mid[c] = 0.5 * (r[c] + s[c]);
      try {
        l2_normalize_inplace(mid);
        std::copy(mid.begin(), mid.end(), r.begin());
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateVector) throw;
        std::clog << "level=warn event=avg_prototype_degenerate class=" << i
                  << " action=fallback_to_id\n";
        if (fallbacks) fallbacks->push_back(static_cast<std::uint32_t>(i));
      }
    }
  }
  return PrototypeStore(std::move(w));
}

void fill_random(std::vector<std::uint32_t>& ids, std::size_t n_iter, std::size_t n_classes,
                 Rng& rng) {
  require(n_iter <= n_classes, Errc::InvalidArgument,
          "N_iter " + std::to_string(n_iter) + " exceeds class count " + std::to_string(n_classes));
  require(ids.size() <= n_iter, Errc::InvalidArgument,
          "selected set already exceeds N_iter " + std::to_string(n_iter));
  if (ids.size() == n_iter) return;
  std::unordered_set<std::uint32_t> taken(ids.begin(), ids.end());
  // Partial Fisher-Yates over all class ids; draws already taken are skipped,
  // which leaves the fillers uniform over the complement.
  std::unordered_map<std::uint32_t, std::uint32_t> displaced;
  const auto n = static_cast<std::uint32_t>(n_classes);
  for (std::uint32_t i = 0; ids.size() < n_iter; ++i) {
    const auto j = static_cast<std::uint32_t>(i + rng.uniform_index(n - i));
    auto at = [&](std::uint32_t p) {
      auto it = displaced.find(p);
      return it == displaced.end() ? p : it->second;
    };
    const std::uint32_t vj = at(j);
    displaced[j] = at(i);
    if (taken.insert(vj).second) ids.push_back(vj);
  }
}

std::vector<std::uint32_t> select_random_ids(std::span<const std::uint32_t> labels,
                                             std::size_t n_iter, std::size_t n_classes, Rng& rng) {
  std::vector<std::uint32_t> ids;
  std::unordered_set<std::uint32_t> seen;
  for (std::uint32_t y : labels) {
    require(y < n_classes, Errc::InvalidArgument, "label out of range");
    if (seen.insert(y).second) ids.push_back(y);
  }
  require(n_iter >= ids.size(), Errc::InvalidArgument,
          "N_iter " + std::to_string(n_iter) + " smaller than " + std::to_string(ids.size()) +
              " distinct batch labels");
  fill_random(ids, n_iter, n_classes, rng);
  return ids;
}

WorkingSet select_random(PrototypeStore& store, std::span<const std::uint32_t> labels,
                         std::size_t n_iter, Rng& rng) {
  return store.extract(select_random_ids(labels, n_iter, store.num_classes(), rng));
}

EnergyReport energy_report(const Matrix& probs, std::span<const std::uint32_t> class_ids,
                           std::span<const std::uint32_t> labels, std::span<const std::size_t> ks) {
  require(probs.cols() == class_ids.size() && probs.rows() == labels.size(), Errc::ShapeError,
          "probability table shape does not match classes x labels");
  const std::unordered_set<std::uint32_t> positives(labels.begin(), labels.end());

  std::vector<std::pair<double, std::uint32_t>> neg;
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    if (positives.contains(class_ids[i])) continue;
    double e = 0.0;
    for (std::size_t j = 0; j < probs.rows(); ++j) e += probs(j, i);
    neg.emplace_back(e, class_ids[i]);
  }
  std::sort(neg.begin(), neg.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });

  EnergyReport rep;
  std::vector<double> prefix(neg.size() + 1, 0.0);
  for (std::size_t i = 0; i < neg.size(); ++i) {
    rep.negative_classes.push_back(neg[i].second);
    rep.energy.push_back(neg[i].first);
    prefix[i + 1] = prefix[i] + neg[i].first;
  }
  const double total = prefix.back();
  for (std::size_t k : ks) {
    const std::size_t kk = std::min(k, neg.size());
    rep.ks.push_back(k);
    rep.ce.push_back(total > 0.0 ? prefix[kk] / total : 0.0);
  }
  return rep;
}

void save_prototypes(const std::filesystem::path& path, const PrototypeStore& store) {
  binio::Writer w(path);
  w.magic("LBLP");
  w.u32(1);
  w.u64(store.num_classes());
  w.u32(static_cast<std::uint32_t>(store.dim()));
  w.f32_span(store.matrix().data());
  w.close();
}

PrototypeStore load_prototypes(const std::filesystem::path& path) {
  binio::Reader r(path);
  r.expect_magic("LBLP");
  const std::uint32_t version = r.u32();
  require(version == 1, Errc::FormatError, "unsupported LBLP version " + std::to_string(version));
  const std::uint64_t n = r.u64();
  const std::uint32_t d = r.u32();
  Matrix w(n, d);
  r.f32_into(w.data());
  r.expect_eof();
  return PrototypeStore::restore(std::move(w), 0, {});
}

}  // namespace lbl
