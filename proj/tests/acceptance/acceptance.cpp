// Acceptance suite: one PASS/FAIL line per criterion.
//
//   lbl_acceptance            run every criterion
//   lbl_acceptance --only 7   run one criterion
//   lbl_acceptance --list     print the criterion names

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "lbl/ablation.hpp"
#include "lbl/cls_loss.hpp"
#include "lbl/diagnose.hpp"
#include "lbl/domqueue.hpp"
#include "lbl/eval.hpp"
#include "lbl/pipeline.hpp"
#include "lbl/protostore.hpp"
#include "lbl/ver_loss.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lbl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
  double time_limit_s = 0.0;  // 0: no limit
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> flat(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

Matrix unflat(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, std::vector<double>(v.begin(), v.end()));
}

struct ClsInstance {
  Matrix f, w;
  std::vector<std::uint32_t> pos;
};

ClsInstance cls_instance(Rng& rng) {
  const std::size_t M = 1 + rng.uniform_index(8), N = 2 + rng.uniform_index(15),
                    D = 2 + rng.uniform_index(7);
  return {test::random_unit_rows(M, D, rng), test::random_unit_rows(N, D, rng),
          test::random_positive_cols(M, N, rng)};
}

FeatureBatch npairs_features(std::size_t classes, std::size_t d, Rng& rng) {
  FeatureBatch b;
  for (std::uint32_t c = 0; c < classes; ++c) {
    b.labels.insert(b.labels.end(), {c, c});
    b.kinds.insert(b.kinds.end(), {SampleKind::Id, SampleKind::Spot});
  }
  b.features = test::random_unit_rows(b.labels.size(), d, rng);
  return b;
}

// ---------------------------------------------------------------------------
// 1. Dummy softmax gradients equal softmax gradients.

Outcome gradient_equivalence() {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const ClsInstance in = cls_instance(rng);
    const double s = rng.uniform(0.5, 30.0);
    const auto a = softmax_ce(in.f, in.w, in.pos, s);
    const auto b = dummy_softmax(in.f, in.w, in.pos, s);
    worst = std::max({worst, max_abs_diff(a.grad_features, b.grad_features),
                      max_abs_diff(a.grad_prototypes, b.grad_prototypes)});
  }
  return {worst <= 1e-9, fmt("50 instances, max |diff| = %.3g (tol 1e-9)", worst)};
}

// ---------------------------------------------------------------------------
// 2. Analytic gradients against central differences.

struct CheckTally {
  int instances = 0;
  int passed = 0;
  double worst = 0.0;
  double worst_abs = 0.0;

  void add(const GradCheckReport& r) {
    ++instances;
    passed += r.passed;
    worst = std::max(worst, r.max_rel_err);
    worst_abs = std::max(worst_abs, r.max_abs_err);
  }
};

template <class Loss>
void check_cls(CheckTally& tally, const ClsInstance& in, const ClsResult& r, Loss loss) {
  const std::size_t M = in.f.rows(), N = in.w.rows(), D = in.f.cols();
  auto lf = [&](std::span<const double> v) { return loss(unflat(v, M, D), in.w); };
  auto lw = [&](std::span<const double> v) { return loss(in.f, unflat(v, N, D)); };
  GradCheckReport a = finite_diff_check(lf, flat(in.f), r.grad_features.data());
  const GradCheckReport b = finite_diff_check(lw, flat(in.w), r.grad_prototypes.data());
  a.passed = a.passed && b.passed;
  a.max_rel_err = std::max(a.max_rel_err, b.max_rel_err);
  a.max_abs_err = std::max(a.max_abs_err, b.max_abs_err);
  tally.add(a);
}

Outcome numeric_gradients() {
  Rng rng(202);
  const int n = 20;

  CheckTally sm, dm, am, an, co, tr;
  for (int t = 0; t < n; ++t) {
    const ClsInstance in = cls_instance(rng);
    const double s = rng.uniform(1.0, 8.0);
    check_cls(sm, in, softmax_ce(in.f, in.w, in.pos, s),
              [&](const Matrix& f, const Matrix& w) { return softmax_ce(f, w, in.pos, s).loss; });
  }
  for (int t = 0; t < n; ++t) {
    const ClsInstance in = cls_instance(rng);
    const auto d = dummy_softmax(in.f, in.w, in.pos, 2.0);
    const Matrix P = d.table.weights;
    check_cls(dm, in, d, [&](const Matrix& f, const Matrix& w) {
      const Matrix l = matmul_bt(f, w);
      double acc = 0.0;
      for (std::size_t i = 0; i < l.size(); ++i) acc -= P.data()[i] * 2.0 * l.data()[i];
      return acc / static_cast<double>(f.rows());
    });
  }
  for (int t = 0; t < n; ++t) {
    const ClsInstance in = cls_instance(rng);
    const MarginParams p{MarginKind::Additive, rng.uniform(0.0, 0.5), rng.uniform(1.0, 8.0), 1.0};
    check_cls(am, in, margin_softmax(in.f, in.w, in.pos, p), [&](const Matrix& f, const Matrix& w) {
      return margin_softmax(f, w, in.pos, p).loss;
    });
  }
  for (int t = 0; t < n; ++t) {
    const ClsInstance in = cls_instance(rng);
    const MarginParams p{MarginKind::Angular, static_cast<double>(2 + rng.uniform_index(3)),
                         rng.uniform(1.0, 8.0), rng.uniform(0.0, 1.0)};
    check_cls(an, in, margin_softmax(in.f, in.w, in.pos, p), [&](const Matrix& f, const Matrix& w) {
      return margin_softmax(f, w, in.pos, p).loss;
    });
  }
  for (int t = 0; t < n; ++t) {
    FeatureBatch b = npairs_features(1 + rng.uniform_index(4), 2 + rng.uniform_index(6), rng);
    const auto r = contrastive_loss(b, rng.uniform(-0.5, 0.5));
    const std::size_t M = b.size(), D = b.features.cols();
    co.add(finite_diff_check(
        [&](std::span<const double> v) { return contrastive_loss_frozen(unflat(v, M, D), r.pairs).loss; },
        flat(b.features), r.grad.data()));
  }
  for (int t = 0; tr.instances < n && t < 10 * n; ++t) {
    FeatureBatch b = npairs_features(2 + rng.uniform_index(3), 2 + rng.uniform_index(6), rng);
    const auto r = triplet_loss(b, 0.3, rng.uniform() < 0.5, true);
    if (r.set.triplets.empty()) continue;
    const std::size_t M = b.size(), D = b.features.cols();
    tr.add(finite_diff_check(
        [&](std::span<const double> v) { return triplet_loss_frozen(unflat(v, M, D), r.set).loss; },
        flat(b.features), r.grad.data()));
  }

  bool ok = true;
  double worst = 0.0, worst_abs = 0.0;
  std::ostringstream os;
  const std::pair<const char*, const CheckTally*> named[] = {
      {"softmax", &sm}, {"dummy", &dm}, {"additive", &am},
      {"angular", &an}, {"contrastive", &co}, {"triplet", &tr}};
  for (const auto& [name, t] : named) {
    ok = ok && t->instances >= n && t->passed == t->instances;
    worst = std::max(worst, t->worst);
    worst_abs = std::max(worst_abs, t->worst_abs);
    os << name << ' ' << t->passed << '/' << t->instances << ' ';
  }
  os << fmt("max rel err %.2g (tol 1e-4), max abs err %.2g", worst, worst_abs);
  return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 3. Random selection of every class equals a monolithic full-softmax step.

Outcome selection_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto t = test::tiny_setup(seed);
    CvcPlan& p = t.plan;
    p.stage1.skip = true;
    p.stage2.skip = true;
    p.stage3.iterations = 1;
    p.stage3.loss = ClsLossKind::Softmax;
    p.stage3.selection = SelectionKind::Random;
    p.stage3.n_iter = t.train.n_classes();
    CvcTrainer trainer(p, nullptr, t.train);
    trainer.run();

    // Monolithic step: every prototype resident, no working set. The batch is
    // drawn from the trainer's batch stream for stage 3, iteration 0.
    EncoderParams enc = init_encoder(model_dims(p, t.train.input_dim()), p.seed);
    Matrix w = init_from_features(encode(enc, t.train.id_inputs), encode(enc, t.train.spot_inputs),
                                  p.stage3.prototype_mode)
                   .matrix();
    Rng rng = Rng::stream(p.seed, Stream::BatchOrder, std::uint64_t{3} << 40);
    const BatchPlan batch =
        build_npairs_batch(static_cast<std::uint32_t>(t.train.n_classes()), p.batch_classes, rng);
    Matrix x(batch.labels.size(), t.train.input_dim());
    for (std::size_t r = 0; r < batch.labels.size(); ++r) {
      const Matrix& src = batch.kinds[r] == SampleKind::Id ? t.train.id_inputs : t.train.spot_inputs;
      std::ranges::copy(src.row(batch.labels[r]), x.row(r).begin());
    }
    const auto fw = forward(enc, x);
    const ClsResult res = softmax_ce(fw.features, w, batch.labels, p.stage3.scale);
    SgdState v = SgdState::zeros_like(enc);
    sgd_step(enc, v, backward(enc, fw.tape, res.grad_features), p.stage3.lr, p.stage3.momentum,
             p.stage3.weight_decay);
    for (std::size_t i = 0; i < w.size(); ++i)
      w.data()[i] -= p.stage3.proto_lr * res.grad_prototypes.data()[i];
    normalize_rows(w);

    worst = std::max({worst, test::max_abs_diff(trainer.encoder(), enc),
                      max_abs_diff(trainer.store().matrix(), w),
                      std::abs(trainer.record().rows.at(0).loss - res.loss)});
  }
  return {worst <= 1e-9, fmt("10 trials, max divergence %.3g (tol 1e-9)", worst)};
}

// ---------------------------------------------------------------------------
// 4. Selection and write_back invariants.

Outcome selection_invariants() {
  Rng rng(404);
  int bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t N = 8 + rng.uniform_index(120), D = 2 + rng.uniform_index(6);
    PrototypeStore store(test::random_unit_rows(N, D, rng));
    std::vector<std::uint32_t> labels;
    for (auto c : rng.sample_without_replacement(static_cast<std::uint32_t>(N),
                                                 static_cast<std::uint32_t>(1 + rng.uniform_index(4))))
      labels.insert(labels.end(), {c, c});
    const std::set<std::uint32_t> distinct(labels.begin(), labels.end());

    std::vector<std::uint32_t> ids;
    std::set<std::uint32_t> required = distinct;
    if (t % 2 == 0) {
      const std::size_t n_iter = distinct.size() + rng.uniform_index(N - distinct.size() + 1);
      ids = select_random_ids(labels, n_iter, N, rng);
      bad += ids.size() != n_iter;
    } else {
      const std::size_t q = 1 + rng.uniform_index(3), c = q + rng.uniform_index(3);
      const auto queues = init_queues(build_graph(store.matrix(), c), q, c);
      for (auto l : labels)
        for (auto m : queues[l].members) required.insert(m);
      const std::size_t n_iter = required.size() + rng.uniform_index(N - required.size() + 1);
      ids = select_dominant(labels, queues, n_iter, rng);
      bad += ids.size() != n_iter;
    }
    const std::set<std::uint32_t> sel(ids.begin(), ids.end());
    bad += sel.size() != ids.size();
    for (auto r : required) bad += sel.count(r) == 0;

    const Matrix before = store.matrix();
    WorkingSet ws = store.extract(ids);
    Matrix upd = ws.rows;
    for (double& v : upd.data()) v += 0.05 * rng.normal();
    store.write_back(ws, upd);
    for (std::uint32_t r = 0; r < N; ++r) {
      if (sel.count(r)) continue;
      const auto a = store.matrix().row(r), b = before.row(r);
      bad += std::memcmp(a.data(), b.data(), a.size_bytes()) != 0;
    }
  }
  return {bad == 0, fmt("1000 random cases (random and dominant), %d violations", bad)};
}

// ---------------------------------------------------------------------------
// 5. Queue update cases and invariants.

Outcome queue_mechanics() {
  std::ostringstream os;
  bool ok = true;
  // Class 0 with Q = {1, 2}, C = {1, 2, 3}; selected classes 0..4.
  const std::vector<std::uint32_t> ids = {0, 1, 2, 3, 4};
  const std::vector<std::uint32_t> labels = {0};
  struct Row {
    std::uint32_t winner;
    QueueCase expect;
    bool mutates;
  };
  for (const Row& row : {Row{0, QueueCase::Correct, false}, Row{2, QueueCase::InQueue, false},
                         Row{3, QueueCase::Promote, true}, Row{4, QueueCase::RejectNoisy, false}}) {
    std::vector<DominantQueue> qs(5);
    qs[0].members = {1, 2};
    qs[0].affinity = {-0.1, -0.2};
    qs[0].candidates = {1, 2, 3};
    qs[0].sorted_candidates = {1, 2, 3};
    DominantQueues q(std::move(qs), 2, 3);
    const DominantQueues before = q;
    Matrix p(1, 5, 0.02);
    p(0, row.winner) = 0.92;
    const auto d = update_queues(labels, p, ids, q);
    bool good = d[0].tag == row.expect && (q == before) != row.mutates;
    if (row.expect == QueueCase::Promote)
      good = good && d[0].evicted == std::optional<std::uint32_t>(2) && q[0].in_queue(3) &&
             q[0].members.size() == 2;
    ok = ok && good;
  }
  os << "4 cases " << (ok ? "ok" : "WRONG") << "; ";

  Rng rng(505);
  const std::size_t N = 80, qn = 5, cn = 15;
  const DominantQueues initial = init_queues(build_graph(test::random_unit_rows(N, 4, rng), cn), qn, cn);
  DominantQueues queues = initial;
  std::size_t events = 0, violations = 0;
  QueueCaseHistogram hist;
  while (events < 10000) {
    std::vector<std::uint32_t> lab;
    for (auto c : rng.sample_without_replacement(N, 4)) lab.insert(lab.end(), {c, c});
    const auto sel = select_dominant(lab, queues, 40, rng);
    Matrix p(lab.size(), sel.size());
    for (std::size_t j = 0; j < p.rows(); ++j) {
      std::vector<double> l(sel.size());
      for (double& v : l) v = 3 * rng.normal();
      const auto s = stable_softmax(l);
      std::copy(s.begin(), s.end(), p.row(j).begin());
    }
    const auto d = update_queues(lab, p, sel, queues);
    hist.add(d);
    events += d.size();
    for (std::uint32_t y = 0; y < N; ++y) {
      const auto& dq = queues[y];
      violations += dq.members.size() != qn;
      for (auto m : dq.members) violations += !initial[y].in_candidates(m);
      violations += std::set<std::uint32_t>(dq.members.begin(), dq.members.end()).size() != qn;
    }
  }
  ok = ok && violations == 0 && hist.promote > 0 && hist.reject_noisy > 0;
  os << events << " random events, " << violations << " invariant violations (promote "
     << hist.promote << ", reject " << hist.reject_noisy << ")";
  return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 6. kNN graph against an exhaustive scan.

Outcome knn_graph() {
  int mismatches = 0;
  std::size_t largest = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(600 + seed);
    const std::size_t n = 2 + rng.uniform_index(499), d = 2 + rng.uniform_index(16);
    largest = std::max(largest, n);
    const Matrix ref = test::random_unit_rows(n, d, rng);
    const std::size_t k = 1 + rng.uniform_index(std::min<std::size_t>(n - 1, 60));
    const auto g = build_graph(ref, k);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::vector<Neighbor> all;
      for (std::uint32_t j = 0; j < n; ++j)
        if (j != i) all.push_back({j, 1.0 - dot(ref.row(i), ref.row(j))});
      std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
      });
      all.resize(k);
      mismatches += g.lists[i] != all;
    }
  }
  return {mismatches == 0,
          fmt("20 seeds, N up to %zu, %d mismatching neighbour lists", largest, mismatches)};
}

// ---------------------------------------------------------------------------
// Ablation criteria share the desk-scale benchmark.

AblationTable run_suite(const std::string& suite) {
  const AblationConfig cfg = default_ablation_config();
  const std::vector<std::string> suites = {suite};
  return run_ablations(suites, cfg, [](const AblationRow& r) {
    std::cerr << fmt("  %-16s %-14s seed=%llu vr=%.4f nc=%d\n", r.suite.c_str(), r.arm.c_str(),
                     static_cast<unsigned long long>(r.seed), r.vr, r.not_converged ? 1 : 0);
  });
}

int seeds_where(const std::function<bool(std::uint64_t)>& holds) {
  int n = 0;
  for (std::uint64_t s : default_ablation_config().seeds) n += holds(s);
  return n;
}

std::string medians(const AblationTable& t, const std::string& suite) {
  std::ostringstream os;
  for (const auto& arm : t.arms(suite)) os << arm << ' ' << fmt("%.3f", t.median(suite, arm)) << ' ';
  return os.str();
}

// 7. CVC ordering and the "not converge" row.
Outcome cvc_ordering() {
  const AblationTable t = run_suite("cvc");
  const double cvc = t.median("cvc", "CVC"), cv = t.median("cvc", "CV#"), c = t.median("cvc", "C##");
  const double scratch = t.median("cvc", "##C"), verif = t.median("cvc", "#V#");
  int nc = 0;
  for (std::uint64_t s : default_ablation_config().seeds) nc += t.find("cvc", "##C", s)->not_converged;
  const bool order = cvc > cv && cv > c;
  const bool row = nc >= 3 || scratch < verif;
  return {order && row, fmt("medians CVC %.3f > CV# %.3f > C## %.3f: %s; ##C %.3f (not converged "
                            "in %d/5) vs #V# %.3f: %s",
                            cvc, cv, c, order ? "yes" : "no", scratch, nc, verif,
                            row ? "yes" : "no")};
}

// 8. More random prototypes never hurt.
Outcome niter_sweep() {
  const AblationTable t = run_suite("niter_sweep");
  const auto arms = t.arms("niter_sweep");
  const int n = seeds_where([&](std::uint64_t s) {
    for (std::size_t i = 1; i < arms.size(); ++i)
      if (t.find("niter_sweep", arms[i], s)->vr < t.find("niter_sweep", arms[i - 1], s)->vr)
        return false;
    return true;
  });
  return {n >= 3, fmt("non-decreasing in %d/5 seeds; medians ", n) + medians(t, "niter_sweep")};
}

// 9. Dominant selection against four times the random budget.
Outcome selection_cost() {
  const AblationTable t = run_suite("selection_cost");
  const auto arms = t.arms("selection_cost");
  const std::string dp = arms.at(0), rp = arms.at(1);
  std::ostringstream os;
  const int n = seeds_where([&](std::uint64_t s) {
    const AblationRow* a = t.find("selection_cost", dp, s);
    const AblationRow* b = t.find("selection_cost", rp, s);
    os << fmt("[seed %llu: %.3f vs %.3f, sync %.0f vs %.0f] ", static_cast<unsigned long long>(s),
              a->vr, b->vr, a->rows_synced_per_iter, b->rows_synced_per_iter);
    return a->vr >= b->vr - 0.01 && a->rows_synced_per_iter < b->rows_synced_per_iter;
  });
  return {n >= 3, fmt("%s within 1 point of %s with fewer synced rows in %d/5 seeds ", dp.c_str(),
                      rp.c_str(), n) + os.str()};
}

// 10. Queue updating on beats off.
Outcome queue_update() {
  const AblationTable t = run_suite("queue_update");
  const int n = seeds_where([&](std::uint64_t s) {
    return t.find("queue_update", "update_on", s)->vr > t.find("queue_update", "update_off", s)->vr;
  });
  return {n >= 4, fmt("on > off in %d/5 seeds (need 4); medians ", n) + medians(t, "queue_update")};
}

// 11. Energy concentration.
Outcome energy_concentration() {
  const AblationConfig cfg = default_ablation_config();
  const AblationData data = make_ablation_data(cfg, 1);
  CvcTrainer trainer(cfg.base, &data.thick, data.train);
  trainer.run();
  const RunRecord& rec = trainer.record();
  const bool rises = rec.ce_end > rec.ce_start;

  // Monotone curves with CE_full = 1 on the trained model and on random tables.
  bool exact = true;
  const auto ks = k_grid(data.train.n_classes());
  const ReplayConfig rc{cfg.base.seed, cfg.base.batch_classes, 8, cfg.base.stage3.scale};
  const auto rep = diagnose(trainer.encoder(), trainer.store(), &trainer.queues(), data.train, ks, rc);
  for (std::size_t i = 1; i < rep.ce.size(); ++i) exact = exact && rep.ce[i] >= rep.ce[i - 1];
  exact = exact && rep.ce.back() == 1.0;
  Rng rng(1111);
  for (int t = 0; t < 500; ++t) {
    const std::size_t M = 1 + rng.uniform_index(6), N = 2 + rng.uniform_index(40);
    Matrix p(M, N);
    for (std::size_t j = 0; j < M; ++j) {
      std::vector<double> l(N);
      for (double& v : l) v = 4 * rng.normal();
      const auto s = stable_softmax(l);
      std::copy(s.begin(), s.end(), p.row(j).begin());
    }
    std::vector<std::uint32_t> ids(N);
    std::iota(ids.begin(), ids.end(), 0u);
    std::vector<std::uint32_t> labels(M);
    for (auto& l : labels) l = static_cast<std::uint32_t>(rng.uniform_index(N));
    if (std::set<std::uint32_t>(labels.begin(), labels.end()).size() == N) continue;
    std::vector<std::size_t> all(N);
    std::iota(all.begin(), all.end(), 1);
    const auto e = energy_report(p, ids, labels, all);
    for (std::size_t i = 1; i < e.ce.size(); ++i) exact = exact && e.ce[i] >= e.ce[i - 1];
    exact = exact && e.ce.back() == 1.0;
  }
  return {rises && exact, fmt("CE_%zu %.4f -> %.4f (%s); monotone with CE_full = 1: %s", rec.ce_k,
                              rec.ce_start, rec.ce_end, rises ? "rises" : "does not rise",
                              exact ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 12. Evaluation against the quadratic oracle.

Outcome evaluation() {
  Rng rng(1212);
  int mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    ScoreSet s;
    const int levels = t % 2 ? 0 : 20;
    auto draw = [&](double mu) {
      const double v = std::clamp(mu + 0.3 * rng.normal(), -1.0, 1.0);
      return levels ? std::round(v * levels) / levels : v;
    };
    const std::size_t g = 1 + rng.uniform_index(80), i = 20 + rng.uniform_index(400);
    for (std::size_t k = 0; k < g; ++k) s.genuine.push_back(draw(0.4));
    for (std::size_t k = 0; k < i; ++k) s.impostor.push_back(draw(0.0));
    const auto c = roc(s), o = test::roc_oracle(s);
    mismatches += c.points.size() != o.points.size();
    for (std::size_t k = 0; k < std::min(c.points.size(), o.points.size()); ++k)
      mismatches += c.points[k].threshold != o.points[k].threshold ||
                    c.points[k].far != o.points[k].far || c.points[k].vr != o.points[k].vr;
    const std::vector<double> targets = {1.0 / static_cast<double>(i), 0.05, 0.2};
    const auto got = vr_at_far(s, targets);
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const auto want = test::vr_at_far_oracle(s, targets[k]);
      mismatches += got[k].threshold != want.threshold || got[k].vr != want.vr;
    }
  }
  const std::size_t n = 20000;
  ScoreSet chance;
  for (std::size_t k = 0; k < n; ++k) chance.genuine.push_back(rng.uniform(-1, 1));
  for (std::size_t k = 0; k < n; ++k) chance.impostor.push_back(rng.uniform(-1, 1));
  const std::vector<double> fars = {0.001, 0.01, 0.1, 0.5};
  double worst = 0.0;
  for (const auto& p : vr_at_far(chance, fars)) worst = std::max(worst, std::abs(p.vr - p.far_target));
  const double band = 2.0 / std::sqrt(static_cast<double>(n));
  return {mismatches == 0 && worst <= band,
          fmt("100 score sets, %d oracle mismatches; chance |VR-FAR| max %.4f (band %.4f)",
              mismatches, worst, band)};
}

// ---------------------------------------------------------------------------
// 13. Determinism and kill/resume.

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

Outcome determinism_resume() {
  AblationConfig cfg = default_ablation_config();
  cfg.train_spec.n_classes = 1000;
  const AblationData data = make_ablation_data(cfg, 1);
  CvcPlan plan = cfg.base;
  plan.stage1.iterations = 150;
  plan.stage2.iterations = 150;
  plan.stage3.iterations = 150;
  const auto dir = std::filesystem::temp_directory_path() / "lbl_acceptance_resume";
  std::filesystem::remove_all(dir);

  auto final_checksum = [&](const std::string& name, std::uint64_t cut) {
    TrainerOptions opt;
    opt.out_dir = dir / name;
    std::filesystem::create_directories(dir / name);
    if (cut == 0) {
      CvcTrainer t(plan, &data.thick, data.train, opt);
      t.run();
      save_encoder(dir / name / "final.lblm", t.encoder());
      return std::pair{t.record().checksum(), fnv(file_bytes(dir / name / "final.lblm")) ^
                                                  fnv(file_bytes(dir / name / "prototypes.lblp")) ^
                                                  fnv(file_bytes(dir / name / "queues.lblq"))};
    }
    {
      CvcTrainer t(plan, &data.thick, data.train, opt);
      t.run(cut);
      t.save_state(dir / name / "state.lbls");
    }  // the process "dies" here
    CvcTrainer t = CvcTrainer::resume(dir / name / "state.lbls", plan, &data.thick, data.train, opt);
    t.run();
    save_encoder(dir / name / "final.lblm", t.encoder());
    return std::pair{t.record().checksum(), fnv(file_bytes(dir / name / "final.lblm")) ^
                                                fnv(file_bytes(dir / name / "prototypes.lblp")) ^
                                                fnv(file_bytes(dir / name / "queues.lblq"))};
  };
  const auto a = final_checksum("a", 0);
  const auto b = final_checksum("b", 0);
  int resumed_equal = 0;
  const std::vector<std::uint64_t> cuts = {1, 149, 150, 151, 299, 300, 377};
  for (std::uint64_t cut : cuts) resumed_equal += final_checksum("cut" + std::to_string(cut), cut) == a;
  std::filesystem::remove_all(dir);
  const bool ok = a == b && resumed_equal == static_cast<int>(cuts.size());
  return {ok, fmt("repeat run identical: %s; %d/%zu resumed runs bit-identical (record %016llx)",
                  a == b ? "yes" : "no", resumed_equal, cuts.size(),
                  static_cast<unsigned long long>(a.first))};
}

// 14. More identities never hurt.
Outcome identity_volume() {
  const AblationTable t = run_suite("identity_volume");
  const auto arms = t.arms("identity_volume");
  const int n = seeds_where([&](std::uint64_t s) {
    for (std::size_t i = 1; i < arms.size(); ++i)
      if (t.find("identity_volume", arms[i], s)->vr < t.find("identity_volume", arms[i - 1], s)->vr)
        return false;
    return true;
  });
  return {n >= 3, fmt("non-decreasing in %d/5 seeds; medians ", n) + medians(t, "identity_volume")};
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "gradient equivalence", gradient_equivalence, 5},
      {2, "analytic vs numeric gradients", numeric_gradients, 60},
      {3, "selection oracle", selection_oracle, 10},
      {4, "selection structural invariants", selection_invariants, 10},
      {5, "queue mechanics", queue_mechanics},
      {6, "kNN graph", knn_graph},
      {7, "CVC ordering", cvc_ordering, 90 * 60},
      {8, "N_iter sweep", niter_sweep},
      {9, "DP vs 4x RP budget", selection_cost},
      {10, "queue update on vs off", queue_update},
      {11, "energy concentration", energy_concentration},
      {12, "evaluation correctness", evaluation},
      {13, "determinism and resume", determinism_resume},
      {14, "identity volume", identity_volume},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lbl acceptance suite"};
  std::vector<int> only;
  bool list = false;
  app.add_option("--only", only, "criterion numbers to run")->check(CLI::Range(1, 14));
  app.add_flag("--list", list, "print criterion names and exit");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& c : criteria()) std::cout << c.id << ' ' << c.name << '\n';
    return 0;
  }
  int failed = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs > c.time_limit_s) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s limit]", c.time_limit_s);
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << fmt(" %2d %-32s %s (%.1f s)", c.id, c.name.c_str(),
                                                     o.detail.c_str(), secs)
              << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
