#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lbl/encoder.hpp"
#include "lbl/rng.hpp"

namespace lbl {

// ---------------------------------------------------------------------------
// Contrastive loss with threshold-gated hard negative mining.
//
//   L = -(1/M) * sum_{j<k} NM(s_jk, y_jk) * s_jk
//   NM = 1 for positives, -1 for negatives with s >= tau, 0 otherwise.
//
// The gate is piecewise constant, so the gradient treats it as fixed.
// ---------------------------------------------------------------------------

struct Pair {
  std::uint32_t j = 0;
  std::uint32_t k = 0;
  bool same_class = false;
  double similarity = 0.0;
  int weight = 0;  // -1, 0 or +1
};

struct PairSet {
  std::vector<Pair> pairs;
  double tau = 0.0;
};

int mining_weight(double similarity, bool same_class, double tau);

struct ContrastiveResult {
  double loss = 0.0;
  Matrix grad;
  PairSet pairs;
};

ContrastiveResult contrastive_loss(const FeatureBatch& batch, double tau);
/// Re-evaluates the loss with the weights of `pairs` held fixed; the oracle
/// side of gradient checks.
ContrastiveResult contrastive_loss_frozen(const Matrix& features, const PairSet& pairs);

// ---------------------------------------------------------------------------
// N-pairs batches: P distinct classes, both samples of each, laid out as
// [c0 id, c0 spot, c1 id, c1 spot, ...].
// ---------------------------------------------------------------------------

struct BatchPlan {
  std::vector<std::uint32_t> classes;  // one entry per class in the batch
  std::vector<std::uint32_t> labels;   // one entry per row, M = 2 * P
  std::vector<SampleKind> kinds;
};

BatchPlan build_npairs_batch(std::uint32_t n_classes, std::size_t classes_per_batch, Rng& rng);
/// Draws from an explicit pool of eligible class ids.
BatchPlan build_npairs_batch(std::span<const std::uint32_t> eligible,
                             std::size_t classes_per_batch, Rng& rng);

// ---------------------------------------------------------------------------
// Triplet loss over every (anchor, positive) ordered pair and every in-batch
// negative, with optional anchor swapping and online hard mining.
// ---------------------------------------------------------------------------

struct Triplet {
  std::uint32_t anchor = 0;
  std::uint32_t positive = 0;
  std::uint32_t negative = 0;
  bool swapped = false;  // negative similarity taken from (positive, negative)
  bool active = false;   // hinge is positive
  double loss = 0.0;
};

struct TripletSet {
  std::vector<Triplet> triplets;
  double margin = 0.0;
  std::size_t candidates = 0;  // triplets considered before mining
};

struct TripletResult {
  double loss = 0.0;
  Matrix grad;
  TripletSet set;
};

TripletResult triplet_loss(const FeatureBatch& batch, double margin, bool swap, bool mine);
/// Loss with the retained set, swap choices and hinge activity held fixed.
TripletResult triplet_loss_frozen(const Matrix& features, const TripletSet& set);

}  // namespace lbl
