#include "lbl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "lbl/binio.hpp"
#include "lbl/cls_loss.hpp"
#include "lbl/diagnose.hpp"
#include "lbl/ver_loss.hpp"

namespace lbl {

namespace {

constexpr double kDivergenceLimit = 1e3;
constexpr std::uint32_t kStateVersion = 1;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

Matrix gather_rows(const Matrix& src, std::span<const std::uint32_t> rows) {
  Matrix out(rows.size(), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::ranges::copy(src.row(rows[r]), out.row(r).begin());
  return out;
}

Matrix bisample_inputs(const BisampleDataset& d, const BatchPlan& plan) {
  Matrix x(plan.labels.size(), d.input_dim());
  for (std::size_t r = 0; r < plan.labels.size(); ++r) {
    const Matrix& src = plan.kinds[r] == SampleKind::Id ? d.id_inputs : d.spot_inputs;
    std::ranges::copy(src.row(plan.labels[r]), x.row(r).begin());
  }
  return x;
}

/// Loss of one classification step; `probs` always holds plain softmax.
ClsResult cls_step(ClsLossKind kind, const Matrix& f, const Matrix& w,
                   std::span<const std::uint32_t> cols, double scale, int angular_m,
                   double additive_m, double additive_s, double blend) {
  switch (kind) {
    case ClsLossKind::Softmax:
      return softmax_ce(f, w, cols, scale);
    case ClsLossKind::Angular:
      return hybrid_signal(f, w, cols, angular_m, scale, blend);
    case ClsLossKind::Additive: {
      ClsResult r =
          margin_softmax(f, w, cols, {MarginKind::Additive, additive_m, additive_s, 1.0});
      r.selected.probs = softmax_ce(f, w, cols, additive_s).selected.probs;
      return r;
    }
  }
  fail(Errc::InvalidArgument, "unknown loss kind");
}

void update_rows(Matrix& w, const Matrix& grad, double lr) {
  auto wd = w.data();
  auto gd = grad.data();
  for (std::size_t i = 0; i < wd.size(); ++i) wd[i] -= lr * gd[i];
  normalize_rows(w);
}

// State file helpers.
void put_matrix(binio::Writer& w, const Matrix& m) {
  w.u64(m.rows());
  w.u64(m.cols());
  w.f64_span(m.data());
}

Matrix get_matrix(binio::Reader& r) {
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  require(rows * cols < (1ull << 32), Errc::FormatError, "implausible matrix in state file");
  Matrix m(rows, cols);
  r.f64_into(m.data());
  return m;
}

void put_vec(binio::Writer& w, std::span<const double> v) {
  w.u64(v.size());
  w.f64_span(v);
}

std::vector<double> get_vec(binio::Reader& r) {
  const std::uint64_t n = r.u64();
  require(n < (1ull << 32), Errc::FormatError, "implausible vector in state file");
  std::vector<double> v(n);
  r.f64_into(v);
  return v;
}

void put_ids(binio::Writer& w, std::span<const std::uint32_t> ids) {
  w.u64(ids.size());
  for (auto id : ids) w.u32(id);
}

std::vector<std::uint32_t> get_ids(binio::Reader& r) {
  const std::uint64_t n = r.u64();
  require(n < (1ull << 32), Errc::FormatError, "implausible id list in state file");
  std::vector<std::uint32_t> v(n);
  for (auto& id : v) id = r.u32();
  return v;
}

void put_hist(binio::Writer& w, const QueueCaseHistogram& h) {
  w.u64(h.correct);
  w.u64(h.in_queue);
  w.u64(h.promote);
  w.u64(h.reject_noisy);
}

QueueCaseHistogram get_hist(binio::Reader& r) {
  QueueCaseHistogram h;
  h.correct = r.u64();
  h.in_queue = r.u64();
  h.promote = r.u64();
  h.reject_noisy = r.u64();
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunRecord

std::string RunRecord::csv() const {
  std::ostringstream os;
  os << "iteration,stage,loss,lr,selected,rows_synced,correct,in_queue,promote,reject_noisy\n"
     << std::setprecision(17);
  for (const auto& r : rows)
    os << r.iteration << ',' << r.stage << ',' << r.loss << ',' << r.lr << ',' << r.selected
       << ',' << r.rows_synced << ',' << r.cases.correct << ',' << r.cases.in_queue << ','
       << r.cases.promote << ',' << r.cases.reject_noisy << '\n';
  return os.str();
}

void RunRecord::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open for writing: " + path.string());
  out << csv();
  require(out.good(), Errc::IoError, "write failed: " + path.string());
}

std::uint64_t RunRecord::checksum() const { return fnv1a(csv()); }

const StageSummary* RunRecord::stage(std::uint32_t k) const {
  for (const auto& s : stages)
    if (s.stage == k) return &s;
  return nullptr;
}

double RunRecord::mean_rows_synced(std::uint32_t stage) const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.stage == stage) v.push_back(static_cast<double>(r.rows_synced));
  return mean_of(v);
}

double RunRecord::mean_selected(std::uint32_t stage) const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.stage == stage) v.push_back(static_cast<double>(r.selected));
  return mean_of(v);
}

bool not_converged(std::span<const double> losses, std::size_t warmup) {
  const std::size_t n = losses.size();
  if (n == 0) return false;
  const std::size_t w = std::max<std::size_t>(1, n / 20);
  warmup = std::min(warmup, n - w);
  const double initial = mean_of(losses.subspan(warmup, w));
  for (std::size_t start = std::max(n / 2, warmup + w); start + w <= n; start += w)
    if (mean_of(losses.subspan(start, w)) <= 0.95 * initial) return false;
  return true;
}

double margin_blend(std::uint64_t t, std::uint64_t iterations, double anneal_frac) {
  const double span = anneal_frac * static_cast<double>(iterations);
  if (span <= 0.0) return 1.0;
  return std::min(1.0, static_cast<double>(t) / span);
}

std::vector<std::size_t> model_dims(const CvcPlan& plan, std::size_t input_dim) {
  std::vector<std::size_t> dims = {input_dim};
  dims.insert(dims.end(), plan.hidden.begin(), plan.hidden.end());
  dims.push_back(plan.dim);
  return dims;
}

// ---------------------------------------------------------------------------
// CvcTrainer

CvcTrainer::CvcTrainer(CvcPlan plan, const MultiSampleDataset* thick,
                       const BisampleDataset& train, TrainerOptions options)
    : plan_(std::move(plan)), thick_(thick), train_(&train), options_(std::move(options)) {
  plan_.validate();
  require(train.n_classes() >= plan_.batch_classes, Errc::ConfigError,
          "training set has fewer classes than run.batch_classes");
  if (!plan_.stage1.skip) {
    require(thick_ != nullptr, Errc::ConfigError, "stage 1 needs a thick dataset");
    require(thick_->samples_per_class > 2, Errc::ConfigError,
            "thick dataset needs more than two samples per class");
    require(thick_->input_dim() == train.input_dim(), Errc::ShapeError,
            "thick and training inputs differ in width");
    require(thick_->n_classes() >= plan_.batch_classes, Errc::ConfigError,
            "thick set has fewer classes than run.batch_classes");
  }
  encoder_ = init_encoder(model_dims(plan_, train.input_dim()), plan_.seed);
}

void CvcTrainer::set_encoder(EncoderParams params) {
  require(global_ == 0 && !stage_open_ && stage_ == 1, Errc::InvalidArgument,
          "encoder can only be replaced before training starts");
  params.validate();
  require(params.input_dim() == train_->input_dim() && params.output_dim() == plan_.dim,
          Errc::ShapeError, "replacement encoder dims do not match the plan");
  encoder_ = std::move(params);
}

std::uint64_t CvcTrainer::stage_iterations(std::uint32_t stage) const {
  switch (stage) {
    case 1: return plan_.stage1.iterations;
    case 2: return plan_.stage2.iterations;
    default: return plan_.stage3.iterations;
  }
}

bool CvcTrainer::stage_skipped(std::uint32_t stage) const {
  switch (stage) {
    case 1: return plan_.stage1.skip;
    case 2: return plan_.stage2.skip;
    default: return plan_.stage3.skip;
  }
}

Rng CvcTrainer::stream(Stream name) const {
  return Rng::stream(plan_.seed, name, (static_cast<std::uint64_t>(stage_) << 40) | iter_);
}

std::uint64_t CvcTrainer::plan_hash() const {
  CvcPlan p = plan_;
  p.thick_path.clear();
  p.train_path.clear();
  p.test_path.clear();
  p.checkpoint_every = 0;
  return fnv1a(p.to_text());
}

double CvcTrainer::replay_ce() const {
  const auto& s3 = plan_.stage3;
  ReplayConfig cfg{plan_.seed, plan_.batch_classes, options_.replay_batches,
                   s3.loss == ClsLossKind::Additive ? s3.additive_s : s3.scale};
  const std::size_t k = record_.ce_k;
  return lbl::replay_ce(encoder_, store_, *train_, std::span<const std::size_t>(&k, 1), cfg)[0];
}

bool CvcTrainer::run(std::uint64_t max_steps) {
  std::uint64_t done = 0;
  while (stage_ <= 3) {
    if (!stage_open_) {
      begin_stage();
      continue;
    }
    if (iter_ >= stage_iterations(stage_)) {
      end_stage();
      continue;
    }
    if (done == max_steps) return false;
    try {
      switch (stage_) {
        case 1: step_stage1(); break;
        case 2: step_stage2(); break;
        default: step_stage3(); break;
      }
    } catch (const Error& e) {
      if (e.code() != Errc::NonFinite) throw;
      fail(Errc::StageDiverged, "stage " + std::to_string(stage_) + " diverged at iteration " +
                                    std::to_string(iter_) + ": " + e.what());
    }
    ++done;
  }
  return true;
}

void CvcTrainer::begin_stage() {
  StageSummary s;
  s.stage = stage_;
  s.first_iteration = global_;
  s.skipped = stage_skipped(stage_);
  record_.stages.push_back(s);
  stage_open_ = true;
  iter_ = 0;
  stage_losses_.clear();
  if (s.skipped) {
    end_stage();
    return;
  }

  velocity_ = SgdState::zeros_like(encoder_);
  if (stage_ == 1) {
    schedule_ = LrSchedule(plan_.stage1.lr, plan_.lr_window);
    Rng rng = Rng::stream(plan_.seed, Stream::Init, 1);
    head_ = Matrix(thick_->n_classes(), plan_.dim);
    for (double& v : head_.data()) v = rng.normal();
    normalize_rows(head_);
  } else if (stage_ == 2) {
    schedule_ = LrSchedule(plan_.stage2.lr, plan_.lr_window);
    head_ = Matrix();  // the classification layer does not survive into stage 2
  } else {
    const auto& s3 = plan_.stage3;
    schedule_ = LrSchedule(s3.lr, plan_.lr_window);
    head_ = Matrix();
    const std::size_t N = train_->n_classes();
    const std::size_t n_iter = s3.selection == SelectionKind::Full ? N : s3.n_iter;
    require(n_iter <= N, Errc::ConfigError,
            "stage3.n_iter " + std::to_string(n_iter) + " exceeds class count " +
                std::to_string(N));
    const Matrix id_features = encode(encoder_, train_->id_inputs);
    store_ = init_from_features(id_features, encode(encoder_, train_->spot_inputs),
                                s3.prototype_mode);
    if (s3.selection == SelectionKind::Dominant) {
      require(s3.c <= N - 1, Errc::ConfigError,
              "stage3.c " + std::to_string(s3.c) + " must not exceed N-1 = " +
                  std::to_string(N - 1));
      require(plan_.batch_classes * (s3.q + 1) <= n_iter, Errc::ConfigError,
              "stage3.n_iter " + std::to_string(n_iter) + " cannot hold the labels and queues (" +
                  std::to_string(plan_.batch_classes * (s3.q + 1)) + " rows)");
      queues_ = init_queues(build_graph(id_features, s3.c), s3.q, s3.c);
    } else {
      queues_ = DominantQueues();
    }
    record_.ce_k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(options_.ce_fraction * static_cast<double>(N))));
    record_.ce_start = replay_ce();
  }
}

std::size_t CvcTrainer::margin_warmup() const {
  auto span = [](std::uint64_t iters, double frac) {
    return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(iters)));
  };
  if (stage_ == 1 && plan_.stage1.loss == ClsLossKind::Angular)
    return span(plan_.stage1.iterations, plan_.stage1.anneal_frac);
  if (stage_ == 3 && plan_.stage3.loss == ClsLossKind::Angular)
    return span(plan_.stage3.iterations, plan_.stage3.anneal_frac);
  return 0;
}

void CvcTrainer::end_stage() {
  StageSummary& s = record_.stages.back();
  s.iterations = iter_;
  if (!stage_losses_.empty()) {
    const std::size_t w = std::max<std::size_t>(1, stage_losses_.size() / 20);
    const std::span<const double> all(stage_losses_);
    s.first_window_loss = mean_of(all.subspan(0, w));
    s.last_window_loss = mean_of(all.subspan(all.size() - w));
    s.not_converged = not_converged(all, margin_warmup());
  }
  if (stage_ == 1 && !s.skipped) {
    const Matrix f = encode(encoder_, thick_->inputs);
    const Matrix logits = matmul_bt(f, head_);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const auto row = logits.row(r);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      if (static_cast<std::size_t>(best) == r / thick_->samples_per_class) ++correct;
    }
    s.train_accuracy = static_cast<double>(correct) / static_cast<double>(logits.rows());
  }
  if (stage_ == 3 && !s.skipped) record_.ce_end = replay_ce();

  if (options_.out_dir) {
    const auto& dir = *options_.out_dir;
    std::filesystem::create_directories(dir);
    const auto enc = dir / ("stage" + std::to_string(stage_) + ".lblm");
    save_encoder(enc, encoder_);
    s.checkpoints.push_back(enc.filename().string());
    if (stage_ == 3 && !s.skipped) {
      save_prototypes(dir / "prototypes.lblp", store_);
      s.checkpoints.push_back("prototypes.lblp");
      if (plan_.stage3.selection == SelectionKind::Dominant) {
        save_queues(dir / "queues.lblq", queues_);
        s.checkpoints.push_back("queues.lblq");
      }
    }
  }
  stage_open_ = false;
  iter_ = 0;
  ++stage_;
}

void CvcTrainer::finish_step(double loss, std::uint64_t selected, std::uint64_t synced,
                             const QueueCaseHistogram& cases) {
  if (!std::isfinite(loss) || loss > kDivergenceLimit)
    fail(Errc::StageDiverged, "stage " + std::to_string(stage_) + " diverged at iteration " +
                                  std::to_string(iter_) + " (loss " + std::to_string(loss) + ")");
  record_.rows.push_back({global_, stage_, loss, schedule_.lr(), selected, synced, cases});
  stage_losses_.push_back(loss);
  schedule_.observe(loss);
  ++iter_;
  ++global_;
  if (plan_.checkpoint_every > 0 && options_.out_dir && global_ % plan_.checkpoint_every == 0) {
    std::filesystem::create_directories(*options_.out_dir);
    save_state(*options_.out_dir / "state.lbls");
  }
}

void CvcTrainer::step_stage1() {
  const auto& s1 = plan_.stage1;
  Rng rng = stream(Stream::BatchOrder);
  const std::uint32_t S = thick_->samples_per_class;
  const auto classes = rng.sample_without_replacement(static_cast<std::uint32_t>(thick_->n_classes()),
                                                      static_cast<std::uint32_t>(plan_.batch_classes));
  std::vector<std::uint32_t> rows, labels;
  for (std::uint32_t c : classes) {
    const auto picks = rng.sample_without_replacement(S, 2);
    for (std::uint32_t k : picks) {
      rows.push_back(c * S + k);
      labels.push_back(c);
    }
  }
  auto fw = forward(encoder_, gather_rows(thick_->inputs, rows));
  const double blend = margin_blend(iter_, s1.iterations, s1.anneal_frac);
  ClsResult res = cls_step(s1.loss, fw.features, head_, labels, s1.scale, s1.angular_m,
                           s1.additive_m, s1.scale, blend);
  if (!std::isfinite(res.loss) || res.loss > kDivergenceLimit) finish_step(res.loss, 0, 0, {});
  const double lr = schedule_.lr();
  sgd_step(encoder_, velocity_, backward(encoder_, fw.tape, res.grad_features), lr, s1.momentum,
           s1.weight_decay);
  update_rows(head_, res.grad_prototypes, s1.head_lr);
  finish_step(res.loss, head_.rows(), 0, {});
}

void CvcTrainer::step_stage2() {
  const auto& s2 = plan_.stage2;
  Rng rng = stream(Stream::BatchOrder);
  const BatchPlan plan =
      build_npairs_batch(static_cast<std::uint32_t>(train_->n_classes()), plan_.batch_classes, rng);
  auto fw = forward(encoder_, bisample_inputs(*train_, plan));
  FeatureBatch batch{fw.features, plan.labels, plan.kinds};
  double loss = 0.0;
  Matrix grad;
  if (s2.loss == VerLossKind::Triplet) {
    auto r = triplet_loss(batch, s2.margin, s2.swap, s2.mine);
    loss = r.loss;
    grad = std::move(r.grad);
  } else {
    auto r = contrastive_loss(batch, s2.tau);
    loss = r.loss;
    grad = std::move(r.grad);
  }
  if (!std::isfinite(loss) || loss > kDivergenceLimit) finish_step(loss, 0, 0, {});
  sgd_step(encoder_, velocity_, backward(encoder_, fw.tape, grad), schedule_.lr(), s2.momentum,
           s2.weight_decay);
  finish_step(loss, 0, 0, {});
}

void CvcTrainer::step_stage3() {
  const auto& s3 = plan_.stage3;
  const std::size_t N = train_->n_classes();
  Rng batch_rng = stream(Stream::BatchOrder);
  Rng fill_rng = stream(Stream::Fillers);
  const BatchPlan plan =
      build_npairs_batch(static_cast<std::uint32_t>(N), plan_.batch_classes, batch_rng);
  auto fw = forward(encoder_, bisample_inputs(*train_, plan));

  std::vector<std::uint32_t> ids;
  switch (s3.selection) {
    case SelectionKind::Full:
      ids.resize(N);
      std::iota(ids.begin(), ids.end(), 0u);
      break;
    case SelectionKind::Random:
      ids = select_random_ids(plan.labels, s3.n_iter, N, fill_rng);
      break;
    case SelectionKind::Dominant:
      ids = select_dominant(plan.labels, queues_, s3.n_iter, fill_rng);
      break;
  }
  const SyncCounters before = store_.counters();
  WorkingSet ws = store_.extract(std::move(ids));
  const auto cols = positive_columns(plan.labels, ws.class_ids);
  const double blend = margin_blend(iter_, s3.iterations, s3.anneal_frac);
  ClsResult res = cls_step(s3.loss, fw.features, ws.rows, cols, s3.scale, s3.angular_m,
                           s3.additive_m, s3.additive_s, blend);
  if (!std::isfinite(res.loss) || res.loss > kDivergenceLimit) finish_step(res.loss, 0, 0, {});

  sgd_step(encoder_, velocity_, backward(encoder_, fw.tape, res.grad_features), schedule_.lr(),
           s3.momentum, s3.weight_decay);
  Matrix updated = ws.rows;
  update_rows(updated, res.grad_prototypes, s3.proto_lr);
  store_.write_back(ws, updated);

  QueueCaseHistogram cases;
  if (s3.selection == SelectionKind::Dominant && s3.queue_update)
    cases.add(update_queues(plan.labels, res.selected.probs, ws.class_ids, queues_));

  const SyncCounters& after = store_.counters();
  const std::uint64_t synced = (after.rows_copied_out - before.rows_copied_out) +
                               (after.rows_written_back - before.rows_written_back);
  finish_step(res.loss, ws.class_ids.size(), synced, cases);
}

// ---------------------------------------------------------------------------
// State files

void CvcTrainer::save_state(const std::filesystem::path& path) const {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    binio::Writer w(tmp);
    w.magic("LBLS");
    w.u32(kStateVersion);
    w.u64(plan_hash());
    w.u32(stage_);
    w.u32(stage_open_ ? 1 : 0);
    w.u64(iter_);
    w.u64(global_);

    w.u64(encoder_.generation);
    w.u32(static_cast<std::uint32_t>(encoder_.layers.size()));
    for (const auto& l : encoder_.layers) {
      put_matrix(w, l.weight);
      put_vec(w, l.bias);
      w.u32(static_cast<std::uint32_t>(l.activation));
    }
    w.u32(static_cast<std::uint32_t>(velocity_.weight_velocity.size()));
    for (std::size_t i = 0; i < velocity_.weight_velocity.size(); ++i) {
      put_matrix(w, velocity_.weight_velocity[i]);
      put_vec(w, velocity_.bias_velocity[i]);
    }
    put_matrix(w, head_);

    put_matrix(w, store_.matrix());
    w.u64(store_.version());
    w.u64(store_.counters().rows_copied_out);
    w.u64(store_.counters().rows_written_back);

    w.u64(queues_.num_classes());
    w.u64(queues_.queue_capacity());
    w.u64(queues_.candidate_capacity());
    for (std::uint32_t i = 0; i < queues_.num_classes(); ++i) {
      const auto& q = queues_[i];
      put_ids(w, q.members);
      put_vec(w, q.affinity);
      put_ids(w, q.candidates);
    }

    const auto st = schedule_.state();
    w.f64(st.lr);
    w.f64(st.best);
    w.f64(st.window_sum);
    w.u64(st.window_count);
    w.u64(st.stalls);
    w.u32(static_cast<std::uint32_t>(st.drops));
    w.u32(st.has_best ? 1 : 0);
    put_vec(w, stage_losses_);

    w.u64(record_.rows.size());
    for (const auto& r : record_.rows) {
      w.u64(r.iteration);
      w.u32(r.stage);
      w.f64(r.loss);
      w.f64(r.lr);
      w.u64(r.selected);
      w.u64(r.rows_synced);
      put_hist(w, r.cases);
    }
    w.u64(record_.stages.size());
    for (const auto& s : record_.stages) {
      w.u32(s.stage);
      w.u32(s.skipped ? 1 : 0);
      w.u64(s.first_iteration);
      w.u64(s.iterations);
      w.f64(s.first_window_loss);
      w.f64(s.last_window_loss);
      w.u32(s.not_converged ? 1 : 0);
      w.f64(s.train_accuracy);
      w.u64(s.checkpoints.size());
      for (const auto& c : s.checkpoints) w.str(c);
    }
    w.u64(record_.ce_k);
    w.f64(record_.ce_start);
    w.f64(record_.ce_end);
    w.close();
  }
  std::filesystem::rename(tmp, path);
}

CvcTrainer CvcTrainer::resume(const std::filesystem::path& path, CvcPlan plan,
                              const MultiSampleDataset* thick, const BisampleDataset& train,
                              TrainerOptions options) {
  CvcTrainer t(std::move(plan), thick, train, std::move(options));
  binio::Reader r(path);
  r.expect_magic("LBLS");
  const std::uint32_t version = r.u32();
  require(version == kStateVersion, Errc::FormatError,
          "unsupported state version " + std::to_string(version));
  require(r.u64() == t.plan_hash(), Errc::ConfigError,
          "state file was written by a different plan: " + path.string());
  t.stage_ = r.u32();
  t.stage_open_ = r.u32() != 0;
  t.iter_ = r.u64();
  t.global_ = r.u64();

  t.encoder_.generation = r.u64();
  const std::uint32_t n_layers = r.u32();
  require(n_layers == t.encoder_.layers.size(), Errc::FormatError, "layer count mismatch");
  for (auto& l : t.encoder_.layers) {
    l.weight = get_matrix(r);
    l.bias = get_vec(r);
    l.activation = static_cast<Activation>(r.u32());
  }
  t.encoder_.validate();
  const std::uint32_t n_vel = r.u32();
  t.velocity_ = SgdState{};
  for (std::uint32_t i = 0; i < n_vel; ++i) {
    t.velocity_.weight_velocity.push_back(get_matrix(r));
    t.velocity_.bias_velocity.push_back(get_vec(r));
  }
  t.head_ = get_matrix(r);

  Matrix w = get_matrix(r);
  const std::uint64_t store_version = r.u64();
  SyncCounters counters;
  counters.rows_copied_out = r.u64();
  counters.rows_written_back = r.u64();
  t.store_ = PrototypeStore::restore(std::move(w), store_version, counters);

  const std::uint64_t nq = r.u64();
  const std::uint64_t q = r.u64();
  const std::uint64_t c = r.u64();
  std::vector<DominantQueue> queues(nq);
  for (auto& dq : queues) {
    dq.members = get_ids(r);
    dq.affinity = get_vec(r);
    dq.candidates = get_ids(r);
  }
  t.queues_ = DominantQueues(std::move(queues), q, c);

  LrSchedule::State st;
  st.lr = r.f64();
  st.best = r.f64();
  st.window_sum = r.f64();
  st.window_count = r.u64();
  st.stalls = r.u64();
  st.drops = static_cast<std::int32_t>(r.u32());
  st.has_best = r.u32() != 0;
  const auto& s = t.plan_;
  const double base = t.stage_ == 1 ? s.stage1.lr : t.stage_ == 2 ? s.stage2.lr : s.stage3.lr;
  t.schedule_ = LrSchedule(base, s.lr_window);
  t.schedule_.restore(st);
  t.stage_losses_ = get_vec(r);

  const std::uint64_t n_rows = r.u64();
  t.record_.rows.resize(n_rows);
  for (auto& row : t.record_.rows) {
    row.iteration = r.u64();
    row.stage = r.u32();
    row.loss = r.f64();
    row.lr = r.f64();
    row.selected = r.u64();
    row.rows_synced = r.u64();
    row.cases = get_hist(r);
  }
  const std::uint64_t n_stages = r.u64();
  t.record_.stages.resize(n_stages);
  for (auto& ss : t.record_.stages) {
    ss.stage = r.u32();
    ss.skipped = r.u32() != 0;
    ss.first_iteration = r.u64();
    ss.iterations = r.u64();
    ss.first_window_loss = r.f64();
    ss.last_window_loss = r.f64();
    ss.not_converged = r.u32() != 0;
    ss.train_accuracy = r.f64();
    const std::uint64_t nc = r.u64();
    for (std::uint64_t i = 0; i < nc; ++i) ss.checkpoints.push_back(r.str());
  }
  t.record_.ce_k = r.u64();
  t.record_.ce_start = r.f64();
  t.record_.ce_end = r.f64();
  r.expect_eof();
  return t;
}

// ---------------------------------------------------------------------------

RunRecord run_plan(const CvcPlan& plan, const MultiSampleDataset* thick,
                   const BisampleDataset& train, EncoderParams* encoder_out,
                   TrainerOptions options) {
  CvcTrainer t(plan, thick, train, std::move(options));
  t.run();
  if (encoder_out) *encoder_out = t.encoder();
  return t.record();
}

std::vector<FarPoint> evaluate(const EncoderParams& params, const BisampleDataset& test,
                               std::span<const double> far_targets) {
  return vr_at_far(score_pairs(params, test, make_test_pairs(test)), far_targets);
}

}  // namespace lbl
