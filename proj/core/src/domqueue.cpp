#include "lbl/domqueue.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

#include "lbl/binio.hpp"
#include "lbl/protostore.hpp"

namespace lbl {

NearestClassGraph BruteForceIndex::build(const Matrix& reference, std::size_t k) const {
  const std::size_t n = reference.rows();
  require(k < n, Errc::InvalidArgument,
          "K=" + std::to_string(k) + " must be smaller than N=" + std::to_string(n));
  NearestClassGraph g;
  g.k = k;
  g.lists.resize(n);
  std::vector<Neighbor> all(n - 1);
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  };
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t t = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      all[t++] = {static_cast<std::uint32_t>(j), 1.0 - dot(reference.row(i), reference.row(j))};
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    g.lists[i].assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return g;
}

NearestClassGraph build_graph(const Matrix& reference, std::size_t k) {
  return BruteForceIndex{}.build(reference, k);
}

bool DominantQueue::in_queue(std::uint32_t c) const {
  return std::find(members.begin(), members.end(), c) != members.end();
}

bool DominantQueue::in_candidates(std::uint32_t c) const {
  return std::binary_search(sorted_candidates.begin(), sorted_candidates.end(), c);
}

DominantQueues::DominantQueues(std::vector<DominantQueue> queues, std::size_t q, std::size_t c)
    : queues_(std::move(queues)), q_(q), c_(c) {
  for (auto& dq : queues_) {
    dq.sorted_candidates = dq.candidates;
    std::sort(dq.sorted_candidates.begin(), dq.sorted_candidates.end());
  }
}

bool operator==(const DominantQueues& a, const DominantQueues& b) {
  if (a.q_ != b.q_ || a.c_ != b.c_ || a.queues_.size() != b.queues_.size()) return false;
  for (std::size_t i = 0; i < a.queues_.size(); ++i) {
    const auto& x = a.queues_[i];
    const auto& y = b.queues_[i];
    if (x.members != y.members || x.affinity != y.affinity || x.candidates != y.candidates)
      return false;
  }
  return true;
}

DominantQueues init_queues(const NearestClassGraph& graph, std::size_t q, std::size_t c) {
  const std::size_t n = graph.lists.size();
  require(q <= c, Errc::InvalidArgument, "queue capacity exceeds candidate capacity");
  require(n == 0 || c <= n - 1, Errc::InvalidArgument,
          "candidate capacity " + std::to_string(c) + " needs more than " + std::to_string(n) +
              " classes");
  require(graph.k >= c, Errc::InvalidArgument,
          "graph depth " + std::to_string(graph.k) + " below candidate capacity " +
              std::to_string(c));
  std::vector<DominantQueue> queues(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& list = graph.lists[i];
    for (std::size_t t = 0; t < q; ++t) {
      queues[i].members.push_back(list[t].id);
      queues[i].affinity.push_back(-list[t].distance);
    }
    for (std::size_t t = 0; t < c; ++t) queues[i].candidates.push_back(list[t].id);
  }
  return DominantQueues(std::move(queues), q, c);
}

std::vector<std::uint32_t> select_dominant(std::span<const std::uint32_t> labels,
                                           const DominantQueues& queues, std::size_t n_iter,
                                           Rng& rng) {
  std::vector<std::uint32_t> ids;
  std::unordered_set<std::uint32_t> seen;
  for (std::uint32_t y : labels) {
    require(y < queues.num_classes(), Errc::InvalidArgument, "label out of range");
    if (seen.insert(y).second) ids.push_back(y);
  }
  for (std::uint32_t y : labels)
    for (std::uint32_t k : queues[y].members)
      if (seen.insert(k).second) ids.push_back(k);
  require(ids.size() <= n_iter, Errc::InvalidArgument,
          "labels plus dominant queues select " + std::to_string(ids.size()) +
              " classes, more than N_iter=" + std::to_string(n_iter));
  fill_random(ids, n_iter, queues.num_classes(), rng);
  return ids;
}

std::vector<QueueUpdateDecision> update_queues(std::span<const std::uint32_t> labels,
                                               const Matrix& probs,
                                               std::span<const std::uint32_t> class_ids,
                                               DominantQueues& queues) {
  require(probs.rows() == labels.size() && probs.cols() == class_ids.size(), Errc::ShapeError,
          "probability table does not match labels x selected classes");
  std::vector<QueueUpdateDecision> out;
  out.reserve(labels.size());
  for (std::uint32_t j = 0; j < labels.size(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < class_ids.size(); ++i) {
      const double p = probs(j, i), pb = probs(j, best);
      if (p > pb || (p == pb && class_ids[i] < class_ids[best])) best = i;
    }
    const std::uint32_t y = labels[j];
    const std::uint32_t h = class_ids[best];
    QueueUpdateDecision d{QueueCase::Correct, j, y, h, std::nullopt};
    DominantQueue& dq = queues[y];
    if (h == y) {
      d.tag = QueueCase::Correct;
    } else if (dq.in_queue(h)) {
      d.tag = QueueCase::InQueue;
    } else if (dq.in_candidates(h) && !dq.members.empty()) {
      d.tag = QueueCase::Promote;
      // Members are kept strongest-first, so the weakest sits at the back.
      d.evicted = dq.members.back();
      dq.members.pop_back();
      dq.affinity.pop_back();
      const double a = probs(j, best);
      auto pos = std::find_if(dq.affinity.begin(), dq.affinity.end(),
                              [a](double x) { return x < a; });
      const auto off = pos - dq.affinity.begin();
      dq.affinity.insert(pos, a);
      dq.members.insert(dq.members.begin() + off, h);
    } else {
      d.tag = QueueCase::RejectNoisy;
    }
    out.push_back(d);
  }
  return out;
}

void QueueCaseHistogram::add(std::span<const QueueUpdateDecision> decisions) {
  for (const auto& d : decisions) switch (d.tag) {
      case QueueCase::Correct: ++correct; break;
      case QueueCase::InQueue: ++in_queue; break;
      case QueueCase::Promote: ++promote; break;
      case QueueCase::RejectNoisy: ++reject_noisy; break;
    }
}

void save_queues(const std::filesystem::path& path, const DominantQueues& queues) {
  binio::Writer w(path);
  w.magic("LBLQ");
  w.u32(1);
  w.u64(queues.num_classes());
  w.u32(static_cast<std::uint32_t>(queues.queue_capacity()));
  w.u32(static_cast<std::uint32_t>(queues.candidate_capacity()));
  for (std::uint32_t i = 0; i < queues.num_classes(); ++i) {
    const auto& dq = queues[i];
    require(dq.members.size() == queues.queue_capacity() &&
                dq.candidates.size() == queues.candidate_capacity(),
            Errc::InvalidArgument, "queue " + std::to_string(i) + " is not at capacity");
    for (std::uint32_t m : dq.members) w.u32(m);
    w.f32_span(dq.affinity);
    for (std::uint32_t c : dq.candidates) w.u32(c);
  }
  w.close();
}

DominantQueues load_queues(const std::filesystem::path& path) {
  binio::Reader r(path);
  r.expect_magic("LBLQ");
  const std::uint32_t version = r.u32();
  require(version == 1, Errc::FormatError, "unsupported LBLQ version " + std::to_string(version));
  const std::uint64_t n = r.u64();
  const std::uint32_t q = r.u32();
  const std::uint32_t c = r.u32();
  std::vector<DominantQueue> queues(n);
  for (auto& dq : queues) {
    dq.members.resize(q);
    dq.affinity.resize(q);
    dq.candidates.resize(c);
    for (auto& m : dq.members) m = r.u32();
    r.f32_into(dq.affinity);
    for (auto& x : dq.candidates) x = r.u32();
  }
  r.expect_eof();
  return DominantQueues(std::move(queues), q, c);
}

}  // namespace lbl
