#include "lbl/cls_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>

namespace lbl {

std::vector<std::uint32_t> positive_columns(std::span<const std::uint32_t> labels,
                                            std::span<const std::uint32_t> class_ids) {
  std::unordered_map<std::uint32_t, std::uint32_t> col;
  col.reserve(class_ids.size());
  for (std::uint32_t i = 0; i < class_ids.size(); ++i) col.emplace(class_ids[i], i);
  std::vector<std::uint32_t> out;
  out.reserve(labels.size());
  for (std::uint32_t y : labels) {
    auto it = col.find(y);
    require(it != col.end(), Errc::MissingPositive,
            "label " + std::to_string(y) + " absent from the selected prototypes");
    out.push_back(it->second);
  }
  return out;
}

namespace {

void check_shapes(const Matrix& features, const Matrix& prototypes,
                  std::span<const std::uint32_t> positive_col) {
  require(features.cols() == prototypes.cols(), Errc::ShapeError,
          "feature dim != prototype dim");
  require(positive_col.size() == features.rows(), Errc::ShapeError,
          "one positive column per feature row required");
  require(prototypes.rows() > 0, Errc::InvalidArgument, "empty prototype slice");
  for (std::uint32_t c : positive_col)
    require(c < prototypes.rows(), Errc::MissingPositive, "positive column out of range");
}

void check_unit_rows(const Matrix& prototypes) {
  for (std::size_t i = 0; i < prototypes.rows(); ++i) {
    const double n = norm2(prototypes.row(i));
    require(std::abs(n - 1.0) <= 1e-3, Errc::NotNormalized,
            "prototype row " + std::to_string(i) + " has norm " + std::to_string(n));
  }
}

// Cross-entropy over arbitrary logits, with dlogit/dcos supplied per entry.
// grad wrt cos is (p - onehot)/M * dlogit_dcos, then chained through cos = w.x.
ClsResult ce_from_logits(const Matrix& features, const Matrix& prototypes,
                         std::span<const std::uint32_t> positive_col, Matrix logits,
                         const Matrix& dlogit_dcos) {
  const std::size_t M = features.rows();
  const double inv_m = 1.0 / static_cast<double>(M);
  ClsResult res;
  res.selected.logits = logits;
  res.selected.positive_col.assign(positive_col.begin(), positive_col.end());
  Matrix& probs = logits;
  Matrix gcos(M, prototypes.rows());
  for (std::size_t j = 0; j < M; ++j) {
    auto pj = probs.row(j);
    stable_softmax_inplace(pj);
    const std::uint32_t t = positive_col[j];
    res.loss -= std::log(std::max(pj[t], 1e-300)) * inv_m;
    for (std::size_t i = 0; i < pj.size(); ++i) {
      const double g = (pj[i] - (i == t ? 1.0 : 0.0)) * inv_m;
      gcos(j, i) = g * dlogit_dcos(j, i);
    }
  }
  res.selected.probs = std::move(probs);
  res.grad_features = matmul(gcos, prototypes);
  res.grad_prototypes = matmul_at(gcos, features);
  return res;
}

int chebyshev_m(double m) {
  const int mi = static_cast<int>(std::lround(m));
  require(std::abs(m - mi) < 1e-12 && mi >= 1 && mi <= 4, Errc::InvalidArgument,
          "angular margin m must be an integer in {1,2,3,4}");
  return mi;
}

double chebyshev(double c, int m) {
  switch (m) {
    case 1: return c;
    case 2: return 2 * c * c - 1;
    case 3: return (4 * c * c - 3) * c;
    default: return 8 * c * c * c * c - 8 * c * c + 1;
  }
}

double chebyshev_derivative(double c, int m) {
  switch (m) {
    case 1: return 1;
    case 2: return 4 * c;
    case 3: return 12 * c * c - 3;
    default: return 32 * c * c * c - 16 * c;
  }
}

int psi_branch(double cos_theta, int m) {
  const double theta = std::acos(std::clamp(cos_theta, -1.0, 1.0));
  const int k = static_cast<int>(std::floor(m * theta / std::numbers::pi));
  return std::min(k, m - 1);
}

}  // namespace

double angular_psi(double cos_theta, int m) {
  const int k = psi_branch(cos_theta, m);
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * chebyshev(cos_theta, m) - 2.0 * k;
}

double angular_psi_derivative(double cos_theta, int m) {
  const int k = psi_branch(cos_theta, m);
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * chebyshev_derivative(cos_theta, m);
}

ClsResult softmax_ce(const Matrix& features, const Matrix& prototypes,
                     std::span<const std::uint32_t> positive_col, double scale) {
  check_shapes(features, prototypes, positive_col);
  Matrix logits = matmul_bt(features, prototypes);
  for (double& v : logits.data()) v *= scale;
  const Matrix dl(features.rows(), prototypes.rows(), scale);
  return ce_from_logits(features, prototypes, positive_col, std::move(logits), dl);
}

DummyResult dummy_softmax(const Matrix& features, const Matrix& prototypes,
                          std::span<const std::uint32_t> positive_col, double scale) {
  check_shapes(features, prototypes, positive_col);
  const std::size_t M = features.rows();
  const double inv_m = 1.0 / static_cast<double>(M);

  DummyResult res;
  Matrix cos = matmul_bt(features, prototypes);
  Matrix probs = cos;
  for (double& v : probs.data()) v *= scale;
  res.selected.logits = probs;
  res.selected.positive_col.assign(positive_col.begin(), positive_col.end());
  for (std::size_t j = 0; j < M; ++j) stable_softmax_inplace(probs.row(j));

  // P(p, i, j): 1 - p for the positive pair, -p for negatives; p frozen.
  Matrix weights(M, prototypes.rows());
  for (std::size_t j = 0; j < M; ++j)
    for (std::size_t i = 0; i < prototypes.rows(); ++i)
      weights(j, i) = (i == positive_col[j] ? 1.0 : 0.0) - probs(j, i);

  Matrix coeff(M, prototypes.rows());
  for (std::size_t j = 0; j < M; ++j)
    for (std::size_t i = 0; i < prototypes.rows(); ++i) {
      res.loss -= weights(j, i) * scale * cos(j, i) * inv_m;
      coeff(j, i) = -weights(j, i) * scale * inv_m;
    }
  res.grad_features = matmul(coeff, prototypes);
  res.grad_prototypes = matmul_at(coeff, features);
  res.selected.probs = std::move(probs);
  res.table.weights = std::move(weights);
  return res;
}

ClsResult margin_softmax(const Matrix& features, const Matrix& prototypes,
                         std::span<const std::uint32_t> positive_col, const MarginParams& params) {
  check_shapes(features, prototypes, positive_col);
  check_unit_rows(prototypes);
  require(params.s > 0.0, Errc::InvalidArgument, "margin scale s must be positive");

  const std::size_t M = features.rows();
  const Matrix cos = matmul_bt(features, prototypes);
  Matrix logits(M, prototypes.rows());
  Matrix dl(M, prototypes.rows(), params.s);
  for (std::size_t i = 0; i < cos.size(); ++i) logits.data()[i] = params.s * cos.data()[i];

  if (params.kind == MarginKind::Additive) {
    require(params.m >= 0.0 && params.m < 1.0, Errc::InvalidArgument,
            "additive margin m must lie in [0, 1)");
    for (std::size_t j = 0; j < M; ++j) logits(j, positive_col[j]) -= params.s * params.m;
  } else {
    const int m = chebyshev_m(params.m);
    require(params.blend >= 0.0 && params.blend <= 1.0, Errc::InvalidArgument,
            "angular blend must lie in [0, 1]");
    const double b = params.blend;
    for (std::size_t j = 0; j < M; ++j) {
      const std::uint32_t t = positive_col[j];
      const double c = cos(j, t);
      logits(j, t) = params.s * ((1.0 - b) * c + b * angular_psi(c, m));
      dl(j, t) = params.s * ((1.0 - b) + b * angular_psi_derivative(c, m));
    }
  }
  return ce_from_logits(features, prototypes, positive_col, std::move(logits), dl);
}

ClsResult hybrid_signal(const Matrix& features, const Matrix& prototypes,
                        std::span<const std::uint32_t> positive_col, int m, double s,
                        double blend) {
  ClsResult res = margin_softmax(features, prototypes, positive_col,
                                 {MarginKind::Angular, static_cast<double>(m), s, blend});
  Matrix plain = matmul_bt(features, prototypes);
  for (double& v : plain.data()) v *= s;
  res.selected.logits = plain;
  for (std::size_t j = 0; j < plain.rows(); ++j) stable_softmax_inplace(plain.row(j));
  res.selected.probs = std::move(plain);
  return res;
}

}  // namespace lbl
