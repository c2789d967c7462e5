#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lbl/error.hpp"

namespace lbl {

/// Dense row-major matrix of doubles. Rows are the unit of addressing
/// throughout the library (one feature, one prototype, one sample).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

/// C = A * B.
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A * B^T; the natural shape for features x prototypes.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// C = A^T * B.
Matrix matmul_at(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
bool all_finite(std::span<const double> v);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Numerically stable softmax. Throws InvalidArgument on empty input and
/// NonFinite on NaN/Inf logits.
std::vector<double> stable_softmax(std::span<const double> logits);
void stable_softmax_inplace(std::span<double> logits);

inline constexpr double kNormEps = 1e-12;

/// Returns v / ||v||. Vectors with norm <= eps are an error, never zeroed.
std::vector<double> l2_normalize(std::span<const double> v, double eps = kNormEps);
void l2_normalize_inplace(std::span<double> v, double eps = kNormEps);
void normalize_rows(Matrix& m, double eps = kNormEps);

struct GradCheckReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Compares an analytic gradient against central differences of f at x.
/// Relative error per coordinate is |a-n| / max(|a|, |n|, 1e-8).
GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> x,
                                  std::span<const double> analytic_grad, double h = 1e-5,
                                  double tolerance = 1e-4);

}  // namespace lbl
