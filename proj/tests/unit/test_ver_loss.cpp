#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "lbl/ver_loss.hpp"
#include "support.hpp"

using namespace lbl;

namespace {

FeatureBatch make_batch(Matrix f, std::vector<std::uint32_t> labels) {
  FeatureBatch b;
  b.features = std::move(f);
  b.labels = std::move(labels);
  b.kinds.assign(b.labels.size(), SampleKind::Id);
  return b;
}

FeatureBatch random_npairs(std::size_t classes, std::size_t d, Rng& rng) {
  std::vector<std::uint32_t> labels;
  for (std::uint32_t c = 0; c < classes; ++c) labels.insert(labels.end(), {c, c});
  return make_batch(test::random_unit_rows(labels.size(), d, rng), labels);
}

std::vector<double> flat(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

Matrix unflat(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

TEST_CASE("mining weights follow the gate") {
  CHECK(mining_weight(0.9, true, 0.5) == 1);
  CHECK(mining_weight(-0.9, true, 0.5) == 1);
  CHECK(mining_weight(0.9, false, 0.5) == -1);
  CHECK(mining_weight(0.5, false, 0.5) == -1);
  CHECK(mining_weight(0.1, false, 0.5) == 0);
}

TEST_CASE("contrastive examples") {
  const double s = 0.8;
  Matrix f(2, 2, {1.0, 0.0, s, std::sqrt(1 - s * s)});
  auto r = contrastive_loss(make_batch(f, {4, 4}), 0.4);
  CHECK(r.loss * 2 == doctest::Approx(-0.8).epsilon(1e-12));
  REQUIRE(r.pairs.pairs.size() == 1);
  CHECK(r.pairs.pairs[0].weight == 1);

  // Negatives below tau contribute nothing.
  Matrix g(3, 2, {1.0, 0.0, s, std::sqrt(1 - s * s), -1.0, 0.0});
  auto r2 = contrastive_loss(make_batch(g, {1, 1, 2}), 0.4);
  CHECK(r2.loss * 3 == doctest::Approx(-0.8).epsilon(1e-12));
  for (double v : r2.grad.row(2)) CHECK(v == 0.0);

  CHECK_THROWS_AS(contrastive_loss(make_batch(Matrix(1, 2, {1, 0}), {0}), 0.4), Error);
  try {
    contrastive_loss(make_batch(Matrix(1, 2, {1, 0}), {0}), 0.4);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InvalidBatch);
  }
}

TEST_CASE("contrastive pair set is complete and ordered") {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const std::size_t M = 2 + rng.uniform_index(12);
    std::vector<std::uint32_t> labels(M);
    for (auto& l : labels) l = static_cast<std::uint32_t>(rng.uniform_index(4));
    const double tau = rng.uniform(-0.9, 0.9);
    const auto r = contrastive_loss(make_batch(test::random_unit_rows(M, 5, rng), labels), tau);
    CHECK(r.pairs.pairs.size() == M * (M - 1) / 2);
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const Pair& p : r.pairs.pairs) {
      CHECK(p.j < p.k);
      CHECK(seen.insert({p.j, p.k}).second);
      CHECK(p.weight == mining_weight(p.similarity, labels[p.j] == labels[p.k], tau));
    }
  }
}

TEST_CASE("contrastive with only positives pulls and never pushes") {
  // Positives identical, negatives orthogonal and below tau.
  Matrix f(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
  const auto r = contrastive_loss(make_batch(f, {0, 0, 1, 1}), 0.4);
  for (const Pair& p : r.pairs.pairs) CHECK(p.weight >= 0);
  // Each row's gradient points along its partner (attractive).
  for (std::size_t j = 0; j < 4; ++j) CHECK(dot(r.grad.row(j), f.row(j)) < 0.0);
}

TEST_CASE("contrastive gradients match central differences") {
  Rng rng(2);
  for (int t = 0; t < 25; ++t) {
    const std::size_t M = 2 + rng.uniform_index(7), D = 2 + rng.uniform_index(7);
    std::vector<std::uint32_t> labels(M);
    for (auto& l : labels) l = static_cast<std::uint32_t>(rng.uniform_index(3));
    const Matrix f = test::random_unit_rows(M, D, rng);
    const auto r = contrastive_loss(make_batch(f, labels), rng.uniform(-0.5, 0.5));
    auto loss = [&](std::span<const double> v) {
      return contrastive_loss_frozen(unflat(v, M, D), r.pairs).loss;
    };
    const auto rep = finite_diff_check(loss, flat(f), r.grad.data());
    CHECK_MESSAGE(rep.passed, "rel err ", rep.max_rel_err);
  }
}

TEST_CASE("npairs batch examples") {
  Rng rng(3);
  const BatchPlan p = build_npairs_batch(10, 3, rng);
  REQUIRE(p.labels.size() == 6);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p.labels[2 * i] == p.classes[i]);
    CHECK(p.labels[2 * i + 1] == p.classes[i]);
    CHECK(p.kinds[2 * i] == SampleKind::Id);
    CHECK(p.kinds[2 * i + 1] == SampleKind::Spot);
  }
  CHECK(std::set<std::uint32_t>(p.classes.begin(), p.classes.end()).size() == 3);

  Rng all(4);
  const BatchPlan full = build_npairs_batch(7, 7, all);
  std::vector<std::uint32_t> c = full.classes;
  std::sort(c.begin(), c.end());
  for (std::uint32_t i = 0; i < 7; ++i) CHECK(c[i] == i);

  Rng a(5), b(5);
  CHECK(build_npairs_batch(100, 8, a).labels == build_npairs_batch(100, 8, b).labels);

  Rng e(6);
  CHECK_THROWS_AS(build_npairs_batch(3, 4, e), Error);

  const std::vector<std::uint32_t> pool = {10, 20, 30, 40};
  Rng q(7);
  const BatchPlan pp = build_npairs_batch(pool, 2, q);
  for (auto l : pp.labels) CHECK(std::find(pool.begin(), pool.end(), l) != pool.end());
}

TEST_CASE("triplet examples") {
  // a=(1,0,0), p at cos 0.9, n at cos 0.1 from a: mined away.
  {
    Matrix f(3, 3, {1, 0, 0, 0.9, std::sqrt(1 - 0.81), 0, 0.1, 0, std::sqrt(0.99)});
    const auto r = triplet_loss(make_batch(f, {0, 0, 1}), 0.2, false, true);
    for (const Triplet& t : r.set.triplets) CHECK_FALSE((t.anchor == 0 && t.negative == 2));
  }
  // sim(a,p)=0.5, sim(a,n)=0.6: retained with loss 0.3.
  {
    Matrix f(3, 3, {1, 0, 0, 0.5, std::sqrt(0.75), 0, 0.6, 0, 0.8});
    const auto r = triplet_loss(make_batch(f, {0, 0, 1}), 0.2, false, true);
    const auto it = std::find_if(r.set.triplets.begin(), r.set.triplets.end(),
                                 [](const Triplet& t) { return t.anchor == 0 && t.negative == 2; });
    REQUIRE(it != r.set.triplets.end());
    CHECK(it->loss == doctest::Approx(0.3).epsilon(1e-12));
  }
  // Swap: sim(a,n)=0.1, sim(p,n)=0.7 -> effective 0.7.
  {
    Matrix f(3, 3, {1, 0, 0, 0, 1, 0, 0.1, 0.7, std::sqrt(0.5)});
    const auto r = triplet_loss(make_batch(f, {0, 0, 1}), 0.2, true, false);
    const auto it = std::find_if(r.set.triplets.begin(), r.set.triplets.end(),
                                 [](const Triplet& t) { return t.anchor == 0 && t.negative == 2; });
    REQUIRE(it != r.set.triplets.end());
    CHECK(it->swapped);
    CHECK(it->loss == doctest::Approx(0.2 - 0.0 + 0.7).epsilon(1e-12));
  }
  try {
    triplet_loss(make_batch(Matrix(2, 2, {1, 0, 0, 1}), {0, 1}), 0.2, true, true);
    FAIL("expected InvalidBatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InvalidBatch);
  }
}

TEST_CASE("triplet set invariants") {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const FeatureBatch b = random_npairs(2 + rng.uniform_index(6), 4, rng);
    const double margin = rng.uniform(0.0, 0.5);
    const bool swap = rng.uniform() < 0.5;
    const auto all = triplet_loss(b, margin, swap, false);
    const std::size_t P = b.size() / 2;
    CHECK(all.set.candidates == 2 * P * (b.size() - 2));
    CHECK(all.set.triplets.size() == all.set.candidates);
    const auto mined = triplet_loss(b, margin, swap, true);
    for (const Triplet& tr : mined.set.triplets) {
      CHECK(b.labels[tr.anchor] == b.labels[tr.positive]);
      CHECK(b.labels[tr.anchor] != b.labels[tr.negative]);
      CHECK(tr.active);
      const double sn = swap ? std::max(dot(b.features.row(tr.anchor), b.features.row(tr.negative)),
                                        dot(b.features.row(tr.positive), b.features.row(tr.negative)))
                             : dot(b.features.row(tr.anchor), b.features.row(tr.negative));
      CHECK(sn > dot(b.features.row(tr.anchor), b.features.row(tr.positive)) - margin);
    }
    // Zero loss iff every candidate satisfies the margin.
    const bool all_ok = std::none_of(all.set.triplets.begin(), all.set.triplets.end(),
                                     [](const Triplet& x) { return x.active; });
    CHECK((mined.loss == 0.0) == all_ok);
  }
}

TEST_CASE("triplet swap takes the larger of both orientations") {
  Rng rng(9);
  for (int t = 0; t < 30; ++t) {
    const FeatureBatch b = random_npairs(4, 3, rng);
    const auto r = triplet_loss(b, 0.2, true, false);
    for (const Triplet& tr : r.set.triplets) {
      const double an = dot(b.features.row(tr.anchor), b.features.row(tr.negative));
      const double pn = dot(b.features.row(tr.positive), b.features.row(tr.negative));
      const double ap = dot(b.features.row(tr.anchor), b.features.row(tr.positive));
      CHECK(tr.loss == doctest::Approx(std::max(0.0, 0.2 - ap + std::max(an, pn))).epsilon(1e-12));
    }
  }
}

TEST_CASE("triplet gradients match central differences") {
  Rng rng(10);
  int checked = 0;
  for (int t = 0; t < 60 && checked < 25; ++t) {
    const FeatureBatch b = random_npairs(2 + rng.uniform_index(3), 2 + rng.uniform_index(6), rng);
    const bool swap = rng.uniform() < 0.5;
    const auto r = triplet_loss(b, 0.3, swap, true);
    if (r.set.triplets.empty()) continue;
    ++checked;
    const std::size_t M = b.size(), D = b.features.cols();
    auto loss = [&](std::span<const double> v) {
      return triplet_loss_frozen(unflat(v, M, D), r.set).loss;
    };
    const auto rep = finite_diff_check(loss, flat(b.features), r.grad.data());
    CHECK_MESSAGE(rep.passed, "rel err ", rep.max_rel_err);
  }
  CHECK(checked >= 20);
}
