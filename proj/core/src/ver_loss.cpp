#include "lbl/ver_loss.hpp"

#include <numeric>
#include <string>

namespace lbl {

int mining_weight(double similarity, bool same_class, double tau) {
  if (same_class) return 1;
  return similarity >= tau ? -1 : 0;
}

namespace {

void accumulate_pair(Matrix& grad, const Matrix& x, std::uint32_t a, std::uint32_t b,
                     double coeff) {
  auto ga = grad.row(a);
  auto gb = grad.row(b);
  auto xa = x.row(a);
  auto xb = x.row(b);
  for (std::size_t c = 0; c < xa.size(); ++c) {
    ga[c] += coeff * xb[c];
    gb[c] += coeff * xa[c];
  }
}

}  // namespace

ContrastiveResult contrastive_loss(const FeatureBatch& batch, double tau) {
  const std::size_t M = batch.size();
  require(M >= 2, Errc::InvalidBatch, "contrastive loss needs at least two rows");
  require(batch.labels.size() == M, Errc::ShapeError, "label count != batch rows");
  require(tau > -1.0 && tau < 1.0, Errc::InvalidArgument, "tau must lie in (-1, 1)");

  PairSet set;
  set.tau = tau;
  set.pairs.reserve(M * (M - 1) / 2);
  for (std::uint32_t j = 0; j < M; ++j)
    for (std::uint32_t k = j + 1; k < M; ++k) {
      const double s = dot(batch.features.row(j), batch.features.row(k));
      const bool same = batch.labels[j] == batch.labels[k];
      set.pairs.push_back({j, k, same, s, mining_weight(s, same, tau)});
    }
  return contrastive_loss_frozen(batch.features, set);
}

ContrastiveResult contrastive_loss_frozen(const Matrix& features, const PairSet& pairs) {
  const double inv_m = 1.0 / static_cast<double>(features.rows());
  ContrastiveResult res;
  res.grad = Matrix(features.rows(), features.cols());
  for (const Pair& p : pairs.pairs) {
    if (p.weight == 0) continue;
    const double s = dot(features.row(p.j), features.row(p.k));
    res.loss -= p.weight * s * inv_m;
    accumulate_pair(res.grad, features, p.j, p.k, -p.weight * inv_m);
  }
  res.pairs = pairs;
  return res;
}

BatchPlan build_npairs_batch(std::uint32_t n_classes, std::size_t classes_per_batch, Rng& rng) {
  require(classes_per_batch <= n_classes, Errc::InvalidArgument,
          "classes_per_batch " + std::to_string(classes_per_batch) + " exceeds " +
              std::to_string(n_classes) + " available classes");
  const auto picked =
      rng.sample_without_replacement(n_classes, static_cast<std::uint32_t>(classes_per_batch));
  BatchPlan plan;
  for (std::uint32_t c : picked) {
    plan.classes.push_back(c);
    plan.labels.insert(plan.labels.end(), {c, c});
    plan.kinds.insert(plan.kinds.end(), {SampleKind::Id, SampleKind::Spot});
  }
  return plan;
}

BatchPlan build_npairs_batch(std::span<const std::uint32_t> eligible,
                             std::size_t classes_per_batch, Rng& rng) {
  BatchPlan local =
      build_npairs_batch(static_cast<std::uint32_t>(eligible.size()), classes_per_batch, rng);
  for (auto& c : local.classes) c = eligible[c];
  for (auto& l : local.labels) l = eligible[l];
  return local;
}

TripletResult triplet_loss(const FeatureBatch& batch, double margin, bool swap, bool mine) {
  const std::size_t M = batch.size();
  require(batch.labels.size() == M, Errc::ShapeError, "label count != batch rows");
  const Matrix sim = matmul_bt(batch.features, batch.features);

  TripletSet set;
  set.margin = margin;
  bool any_positive = false;
  for (std::uint32_t a = 0; a < M; ++a)
    for (std::uint32_t p = 0; p < M; ++p) {
      if (a == p || batch.labels[a] != batch.labels[p]) continue;
      any_positive = true;
      for (std::uint32_t n = 0; n < M; ++n) {
        if (batch.labels[n] == batch.labels[a]) continue;
        ++set.candidates;
        Triplet t{a, p, n, false, false, 0.0};
        double neg = sim(a, n);
        if (swap && sim(p, n) > neg) {
          neg = sim(p, n);
          t.swapped = true;
        }
        const double l = margin - sim(a, p) + neg;
        t.active = l > 0.0;
        t.loss = t.active ? l : 0.0;
        if (mine && !t.active) continue;
        set.triplets.push_back(t);
      }
    }
  require(any_positive, Errc::InvalidBatch, "triplet batch contains no positive pair");
  return triplet_loss_frozen(batch.features, set);
}

TripletResult triplet_loss_frozen(const Matrix& features, const TripletSet& set) {
  TripletResult res;
  res.grad = Matrix(features.rows(), features.cols());
  res.set = set;
  if (set.triplets.empty()) return res;
  const double inv_r = 1.0 / static_cast<double>(set.triplets.size());
  for (const Triplet& t : set.triplets) {
    if (!t.active) continue;
    const std::uint32_t side = t.swapped ? t.positive : t.anchor;
    res.loss += (set.margin - dot(features.row(t.anchor), features.row(t.positive)) +
                 dot(features.row(side), features.row(t.negative))) *
                inv_r;
    accumulate_pair(res.grad, features, t.anchor, t.positive, -inv_r);
    accumulate_pair(res.grad, features, side, t.negative, inv_r);
  }
  return res;
}

}  // namespace lbl
