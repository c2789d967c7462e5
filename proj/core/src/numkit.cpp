#include "lbl/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lbl {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonFinite: return "NonFinite";
    case Errc::DegenerateVector: return "DegenerateVector";
    case Errc::ShapeError: return "ShapeError";
    case Errc::TapeMismatch: return "TapeMismatch";
    case Errc::InvalidBatch: return "InvalidBatch";
    case Errc::MissingPositive: return "MissingPositive";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::StaleWorkingSet: return "StaleWorkingSet";
    case Errc::ResolutionError: return "ResolutionError";
    case Errc::StageDiverged: return "StageDiverged";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
    case Errc::FormatError: return "FormatError";
  }
  return "Unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, Errc::ShapeError,
          "matrix data length " + std::to_string(data_.size()) + " != " +
              std::to_string(rows_) + "x" + std::to_string(cols_));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), Errc::ShapeError, "matmul inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), Errc::ShapeError, "matmul_bt inner dimension mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), Errc::ShapeError, "matmul_at inner dimension mismatch");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      auto ci = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::ShapeError,
          "max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

void stable_softmax_inplace(std::span<double> logits) {
  require(!logits.empty(), Errc::InvalidArgument, "softmax of empty vector");
  require(all_finite(logits), Errc::NonFinite, "softmax input contains NaN/Inf");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

std::vector<double> stable_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  stable_softmax_inplace(out);
  return out;
}

void l2_normalize_inplace(std::span<double> v, double eps) {
  require(all_finite(v), Errc::NonFinite, "normalize input contains NaN/Inf");
  const double n = norm2(v);
  require(n > eps, Errc::DegenerateVector,
          "vector norm " + std::to_string(n) + " <= eps");
  for (double& x : v) x /= n;
}

std::vector<double> l2_normalize(std::span<const double> v, double eps) {
  std::vector<double> out(v.begin(), v.end());
  l2_normalize_inplace(out, eps);
  return out;
}

void normalize_rows(Matrix& m, double eps) {
  for (std::size_t r = 0; r < m.rows(); ++r) l2_normalize_inplace(m.row(r), eps);
}

GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> x,
                                  std::span<const double> analytic_grad, double h,
                                  double tolerance) {
  require(x.size() == analytic_grad.size(), Errc::ShapeError,
          "gradient length does not match parameter length");
  require(h >= 1e-6 && h <= 1e-3, Errc::InvalidArgument, "step h must lie in [1e-6, 1e-3]");

  std::vector<double> probe(x.begin(), x.end());
  GradCheckReport report;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    require(std::isfinite(fp) && std::isfinite(fm), Errc::NonFinite,
            "function evaluation not finite at coordinate " + std::to_string(i));

    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic_grad[i];
    const double abs_err = std::abs(a - numeric);
    const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-8});
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    if (rel_err > report.max_rel_err) {
      report.max_rel_err = rel_err;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace lbl
