#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lbl/cls_loss.hpp"
#include "support.hpp"

using namespace lbl;

namespace {

std::vector<double> flat(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

Matrix unflat(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, std::vector<double>(v.begin(), v.end()));
}

struct Instance {
  Matrix f, w;
  std::vector<std::uint32_t> pos;
};

Instance random_instance(Rng& rng, std::size_t max_m = 8, std::size_t max_n = 16,
                         std::size_t max_d = 8) {
  const std::size_t M = 1 + rng.uniform_index(max_m), N = 2 + rng.uniform_index(max_n - 1),
                    D = 2 + rng.uniform_index(max_d - 1);
  return {test::random_unit_rows(M, D, rng), test::random_unit_rows(N, D, rng),
          test::random_positive_cols(M, N, rng)};
}

// Checks both gradients of `loss(f, w)` against central differences.
template <class F>
void grad_check(const Instance& in, const ClsResult& r, F loss, const char* what) {
  const std::size_t M = in.f.rows(), N = in.w.rows(), D = in.f.cols();
  auto lf = [&](std::span<const double> v) { return loss(unflat(v, M, D), in.w); };
  auto rf = finite_diff_check(lf, flat(in.f), r.grad_features.data());
  CHECK_MESSAGE(rf.passed, what, " features rel err ", rf.max_rel_err);
  auto lw = [&](std::span<const double> v) { return loss(in.f, unflat(v, N, D)); };
  auto rw = finite_diff_check(lw, flat(in.w), r.grad_prototypes.data());
  CHECK_MESSAGE(rw.passed, what, " prototypes rel err ", rw.max_rel_err);
}

}  // namespace

TEST_CASE("positive_columns") {
  const std::vector<std::uint32_t> ids = {7, 3, 9};
  const std::vector<std::uint32_t> labels = {3, 9, 3};
  CHECK(positive_columns(labels, ids) == std::vector<std::uint32_t>{1, 2, 1});
  const std::vector<std::uint32_t> missing = {4};
  try {
    positive_columns(missing, ids);
    FAIL("expected MissingPositive");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingPositive);
  }
}

TEST_CASE("softmax_ce examples") {
  Matrix w(2, 2, {1, 0, 1, 0});
  Matrix f(3, 2, {1, 0, 0, 1, 0.6, 0.8});
  std::vector<std::uint32_t> pos = {0, 1, 0};
  CHECK(softmax_ce(f, w, pos, 1.0).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Matrix w2(2, 2, {1, 0, 0, 1});
  Matrix x(1, 2, {1, 0});
  std::vector<std::uint32_t> p0 = {0};
  const double l64 = softmax_ce(x, w2, p0, 64.0).loss;
  CHECK(l64 < 1e-20);
  CHECK(softmax_ce(x, w2, p0, 4.0).loss > l64);

  std::vector<std::uint32_t> bad = {2};
  try {
    softmax_ce(x, w2, bad);
    FAIL("expected MissingPositive");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingPositive);
  }
}

TEST_CASE("softmax_ce matches central differences on random instances") {
  Rng rng(1);
  for (int t = 0; t < 25; ++t) {
    const Instance in = random_instance(rng);
    const double s = rng.uniform(1.0, 8.0);
    const auto r = softmax_ce(in.f, in.w, in.pos, s);
    grad_check(in, r, [&](const Matrix& f, const Matrix& w) {
      return softmax_ce(f, w, in.pos, s).loss;
    }, "softmax");
    for (std::size_t j = 0; j < r.selected.probs.rows(); ++j) {
      double sum = 0.0;
      for (double p : r.selected.probs.row(j)) sum += p;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("dummy softmax pair weights") {
  // One row, four identical prototypes: p = 0.25 everywhere.
  Matrix w(4, 2, {1, 0, 1, 0, 1, 0, 1, 0});
  Matrix f(1, 2, {0, 1});
  std::vector<std::uint32_t> pos = {2};
  const auto d = dummy_softmax(f, w, pos, 1.0);
  CHECK(d.table.weights(0, 2) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(d.table.weights(0, 0) == doctest::Approx(-0.25).epsilon(1e-12));

  // Perfectly classified row: weights vanish and so does the gradient.
  Matrix w2(2, 2, {1, 0, -1, 0});
  Matrix x(1, 2, {1, 0});
  std::vector<std::uint32_t> p0 = {0};
  const auto z = dummy_softmax(x, w2, p0, 800.0);
  for (double v : z.table.weights.data()) CHECK(v == 0.0);
  for (double v : z.grad_features.data()) CHECK(v == 0.0);
  for (double v : z.grad_prototypes.data()) CHECK(v == 0.0);
}

TEST_CASE("dummy softmax equals softmax gradients and rows of weights sum to zero") {
  Rng rng(2);
  for (int t = 0; t < 60; ++t) {
    const Instance in = random_instance(rng);
    const double s = rng.uniform(0.5, 30.0);
    const auto a = softmax_ce(in.f, in.w, in.pos, s);
    const auto b = dummy_softmax(in.f, in.w, in.pos, s);
    CHECK(max_abs_diff(a.grad_features, b.grad_features) <= 1e-9);
    CHECK(max_abs_diff(a.grad_prototypes, b.grad_prototypes) <= 1e-9);
    CHECK(b.table.weights.rows() * b.table.weights.cols() == in.f.rows() * in.w.rows());
    for (std::size_t j = 0; j < b.table.weights.rows(); ++j) {
      double sum = 0.0;
      for (double v : b.table.weights.row(j)) sum += v;
      CHECK(std::abs(sum) <= 1e-9);
    }
  }
}

TEST_CASE("dummy softmax gradients are those of its frozen linear surrogate") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Instance in = random_instance(rng);
    const auto d = dummy_softmax(in.f, in.w, in.pos, 2.0);
    const Matrix P = d.table.weights;
    auto lin = [&](const Matrix& f, const Matrix& w) {
      const Matrix l = matmul_bt(f, w);
      double s = 0.0;
      for (std::size_t i = 0; i < l.size(); ++i) s -= P.data()[i] * 2.0 * l.data()[i];
      return s / static_cast<double>(f.rows());
    };
    grad_check(in, d, lin, "dummy");
  }
}

TEST_CASE("additive margin examples") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Instance in = random_instance(rng);
    const auto a = margin_softmax(in.f, in.w, in.pos, {MarginKind::Additive, 0.0, 1.0, 1.0});
    const auto b = softmax_ce(in.f, in.w, in.pos, 1.0);
    CHECK(std::abs(a.loss - b.loss) <= 1e-12);
  }
  Matrix w(2, 2, {1, 0, 0, 1});
  Matrix f(1, 2, {0.8, 0.6});
  std::vector<std::uint32_t> pos = {0};
  const auto r = margin_softmax(f, w, pos, {MarginKind::Additive, 0.35, 30.0, 1.0});
  CHECK(r.selected.logits(0, 0) == doctest::Approx(13.5).epsilon(1e-12));
  CHECK(r.selected.logits(0, 1) == doctest::Approx(18.0).epsilon(1e-12));
}

TEST_CASE("margin softmax rejects bad prototypes and parameters") {
  Matrix w(2, 2, {2, 0, 0, 1});
  Matrix f(1, 2, {1, 0});
  std::vector<std::uint32_t> pos = {0};
  try {
    margin_softmax(f, w, pos, {});
    FAIL("expected NotNormalized");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotNormalized);
  }
  Matrix u(2, 2, {1, 0, 0, 1});
  CHECK_THROWS_AS(margin_softmax(f, u, pos, {MarginKind::Additive, 1.0, 30.0, 1.0}), Error);
  CHECK_THROWS_AS(margin_softmax(f, u, pos, {MarginKind::Additive, 0.3, 0.0, 1.0}), Error);
  CHECK_THROWS_AS(margin_softmax(f, u, pos, {MarginKind::Angular, 2.5, 30.0, 1.0}), Error);
}

TEST_CASE("angular psi is the monotone extension") {
  for (int m = 1; m <= 4; ++m) {
    double prev = INFINITY;
    for (int i = 0; i <= 1000; ++i) {
      const double theta = std::numbers::pi * i / 1000.0;
      const double v = angular_psi(std::cos(theta), m);
      CHECK(v <= prev + 1e-12);
      prev = v;
    }
    CHECK(angular_psi(1.0, m) == doctest::Approx(1.0));
  }
  CHECK(angular_psi(0.5, 1) == doctest::Approx(0.5));
  // m=2 at 60 degrees: k = floor(2pi/3 / pi) = 0, cos(120) = -0.5.
  CHECK(angular_psi(0.5, 2) == doctest::Approx(-0.5).epsilon(1e-12));
  // m=2 at 120 degrees: k = 1, -cos(240) - 2 = 0.5 - 2.
  CHECK(angular_psi(-0.5, 2) == doctest::Approx(-1.5).epsilon(1e-12));
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const double c = rng.uniform(-0.999, 0.999);
    const int m = 1 + static_cast<int>(rng.uniform_index(4));
    const double h = 1e-6;
    const double num = (angular_psi(c + h, m) - angular_psi(c - h, m)) / (2 * h);
    CHECK(angular_psi_derivative(c, m) == doctest::Approx(num).epsilon(1e-4));
  }
}

TEST_CASE("angular margin on two classes in the plane") {
  Matrix w(2, 2, {1, 0, 0, 1});
  std::vector<std::uint32_t> pos = {0};
  double prev = INFINITY;
  for (int i = 40; i >= 0; --i) {
    const double th = 0.02 * i;
    Matrix f(1, 2, {std::cos(th), std::sin(th)});
    const double l = margin_softmax(f, w, pos, {MarginKind::Angular, 2.0, 4.0, 1.0}).loss;
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("margin losses match central differences") {
  Rng rng(6);
  for (int t = 0; t < 25; ++t) {
    Instance in = random_instance(rng);
    const MarginParams add{MarginKind::Additive, rng.uniform(0.0, 0.5), rng.uniform(1.0, 10.0), 1.0};
    const auto ra = margin_softmax(in.f, in.w, in.pos, add);
    grad_check(in, ra, [&](const Matrix& f, const Matrix& w) {
      return margin_softmax(f, w, in.pos, add).loss;
    }, "additive");
  }
  for (int t = 0; t < 25; ++t) {
    Instance in = random_instance(rng);
    const MarginParams ang{MarginKind::Angular, static_cast<double>(2 + rng.uniform_index(3)),
                           rng.uniform(1.0, 8.0), rng.uniform(0.0, 1.0)};
    const auto r = margin_softmax(in.f, in.w, in.pos, ang);
    grad_check(in, r, [&](const Matrix& f, const Matrix& w) {
      return margin_softmax(f, w, in.pos, ang).loss;
    }, "angular");
  }
}

TEST_CASE("hybrid signal") {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const Instance in = random_instance(rng);
    const double s = rng.uniform(1.0, 16.0);
    const auto h1 = hybrid_signal(in.f, in.w, in.pos, 1, s);
    const auto sm = softmax_ce(in.f, in.w, in.pos, s);
    CHECK(max_abs_diff(h1.grad_features, sm.grad_features) <= 1e-12);
    CHECK(max_abs_diff(h1.grad_prototypes, sm.grad_prototypes) <= 1e-12);
    CHECK(max_abs_diff(h1.selected.probs, sm.selected.probs) <= 1e-12);

    const auto h4 = hybrid_signal(in.f, in.w, in.pos, 4, s);
    const Matrix plain = matmul_bt(in.f, in.w);
    for (std::size_t j = 0; j < plain.rows(); ++j) {
      std::vector<double> logits(plain.row(j).begin(), plain.row(j).end());
      for (double& v : logits) v *= s;
      const auto p = stable_softmax(logits);
      double sum = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(std::abs(h4.selected.probs(j, i) - p[i]) <= 1e-12);
        sum += h4.selected.probs(j, i);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
    const auto ang = margin_softmax(in.f, in.w, in.pos, {MarginKind::Angular, 4.0, s, 1.0});
    CHECK(max_abs_diff(h4.grad_features, ang.grad_features) <= 1e-12);
    CHECK(max_abs_diff(h4.grad_prototypes, ang.grad_prototypes) <= 1e-12);
  }
}
