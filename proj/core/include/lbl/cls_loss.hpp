#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lbl/numkit.hpp"

namespace lbl {

/// Logits and probabilities of a batch against the selected prototype slice.
/// positive_col[j] is the column holding row j's own class.
struct SelectedLogits {
  Matrix logits;  // M x N_iter
  Matrix probs;   // M x N_iter, rows sum to 1
  std::vector<std::uint32_t> positive_col;
};

struct ClsResult {
  double loss = 0.0;
  Matrix grad_features;    // M x D
  Matrix grad_prototypes;  // N_iter x D
  SelectedLogits selected;
};

/// Maps each batch label to its column in the selected class list. Throws
/// MissingPositive if a label was not selected (a selection bug).
std::vector<std::uint32_t> positive_columns(std::span<const std::uint32_t> labels,
                                            std::span<const std::uint32_t> class_ids);

/// Plain softmax cross-entropy over logits scale * w_i.x_j, averaged over the
/// batch.
ClsResult softmax_ce(const Matrix& features, const Matrix& prototypes,
                     std::span<const std::uint32_t> positive_col, double scale = 1.0);

/// Per-pair weights of the surrogate linear loss: 1 - p for the positive
/// column, -p for every negative column.
struct PairWeightTable {
  Matrix weights;  // M x N_iter
};

struct DummyResult : ClsResult {
  PairWeightTable table;
};

/// Linear surrogate  L = -(1/M) sum_j sum_i P_ij * scale * w_i.x_j  with the
/// probabilities frozen. Its gradients coincide with softmax_ce's.
DummyResult dummy_softmax(const Matrix& features, const Matrix& prototypes,
                          std::span<const std::uint32_t> positive_col, double scale = 1.0);

enum class MarginKind { Angular, Additive };

struct MarginParams {
  MarginKind kind = MarginKind::Additive;
  double m = 0.35;
  double s = 30.0;
  /// Angular only: target logit is s*((1-blend)*cos + blend*psi(cos)).
  double blend = 1.0;
};

/// psi(theta) = (-1)^k cos(m theta) - 2k, k = floor(m theta / pi), as a
/// function of cos(theta). Monotone decreasing in theta on [0, pi].
double angular_psi(double cos_theta, int m);
double angular_psi_derivative(double cos_theta, int m);

/// Margin softmax. Prototypes must be unit rows (NotNormalized otherwise).
ClsResult margin_softmax(const Matrix& features, const Matrix& prototypes,
                         std::span<const std::uint32_t> positive_col, const MarginParams& params);

/// Gradients from the angular-margin logits; `selected.probs` from the plain
/// scaled logits, which is what queue updates and energy diagnostics read.
ClsResult hybrid_signal(const Matrix& features, const Matrix& prototypes,
                        std::span<const std::uint32_t> positive_col, int m, double s,
                        double blend = 1.0);

}  // namespace lbl
