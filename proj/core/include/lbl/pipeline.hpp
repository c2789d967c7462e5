#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lbl/datagen.hpp"
#include "lbl/domqueue.hpp"
#include "lbl/encoder.hpp"
#include "lbl/eval.hpp"
#include "lbl/plan.hpp"
#include "lbl/protostore.hpp"

namespace lbl {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RunRow {
  std::uint64_t iteration = 0;  // global, monotone across stages
  std::uint32_t stage = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::uint64_t selected = 0;     // prototypes resident this iteration
  std::uint64_t rows_synced = 0;  // rows copied out plus rows written back
  QueueCaseHistogram cases;
};

struct StageSummary {
  std::uint32_t stage = 0;
  bool skipped = false;
  std::uint64_t first_iteration = 0;
  std::uint64_t iterations = 0;
  double first_window_loss = kNaN;
  double last_window_loss = kNaN;
  bool not_converged = false;
  double train_accuracy = kNaN;  // stage 1 only
  std::vector<std::string> checkpoints;
};

struct RunRecord {
  std::vector<RunRow> rows;
  std::vector<StageSummary> stages;
  /// Replay-batch CE_K of stage 3 at K = ce_k, before the first and after the
  /// last iteration.
  std::size_t ce_k = 0;
  double ce_start = kNaN;
  double ce_end = kNaN;

  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
  std::uint64_t checksum() const;
  const StageSummary* stage(std::uint32_t k) const;
  double mean_rows_synced(std::uint32_t stage) const;
  double mean_selected(std::uint32_t stage) const;
};

/// Windowed "did not converge" test on a stage's loss trace: with window
/// w = max(1, n/20), every window mean starting at or after n/2 stays above
/// 95% of the initial window's mean. The initial window starts at `warmup`,
/// the first iteration of the fully annealed objective.
bool not_converged(std::span<const double> losses, std::size_t warmup = 0);

/// Annealing weight of the angular margin at stage iteration t.
double margin_blend(std::uint64_t t, std::uint64_t iterations, double anneal_frac);

struct TrainerOptions {
  /// Stage checkpoints and periodic state files go here when set.
  std::optional<std::filesystem::path> out_dir;
  /// Replay batches used for the CE_K diagnostics of stage 3.
  std::size_t replay_batches = 8;
  /// CE_K diagnostic K as a fraction of N.
  double ce_fraction = 0.01;
};

/// Three-stage trainer. Owns the encoder, the stage-1 head, the prototype
/// store and the dominant queues; single-threaded. Every random draw comes
/// from a counter-based stream keyed by (stage, iteration), so a trainer
/// restored from a state file continues bit-exactly.
class CvcTrainer {
 public:
  /// `thick` may be null when stage 1 is skipped.
  CvcTrainer(CvcPlan plan, const MultiSampleDataset* thick, const BisampleDataset& train,
             TrainerOptions options = {});

  /// Advances by at most `max_steps` iterations (stage set-up and skipped
  /// stages are free). Returns true once every stage has finished.
  bool run(std::uint64_t max_steps = std::numeric_limits<std::uint64_t>::max());
  bool finished() const { return stage_ > 3; }

  /// LBLS state file: f64 snapshot of everything run() needs to continue.
  void save_state(const std::filesystem::path& path) const;
  static CvcTrainer resume(const std::filesystem::path& path, CvcPlan plan,
                           const MultiSampleDataset* thick, const BisampleDataset& train,
                           TrainerOptions options = {});

  const CvcPlan& plan() const { return plan_; }
  const EncoderParams& encoder() const { return encoder_; }
  const Matrix& head() const { return head_; }
  const PrototypeStore& store() const { return store_; }
  const DominantQueues& queues() const { return queues_; }
  const RunRecord& record() const { return record_; }
  std::uint32_t current_stage() const { return stage_; }
  std::uint64_t global_iteration() const { return global_; }

  /// Replaces the starting encoder (ablation arms that reuse earlier stages).
  /// Only valid before run() has done any work.
  void set_encoder(EncoderParams params);

 private:
  void begin_stage();
  void end_stage();
  void step_stage1();
  void step_stage2();
  void step_stage3();
  void finish_step(double loss, std::uint64_t selected, std::uint64_t synced,
                   const QueueCaseHistogram& cases);
  double replay_ce() const;
  std::uint64_t stage_iterations(std::uint32_t stage) const;
  std::size_t margin_warmup() const;
  bool stage_skipped(std::uint32_t stage) const;
  Rng stream(Stream name) const;
  std::uint64_t plan_hash() const;

  CvcPlan plan_;
  const MultiSampleDataset* thick_ = nullptr;
  const BisampleDataset* train_ = nullptr;
  TrainerOptions options_;

  std::uint32_t stage_ = 1;
  bool stage_open_ = false;
  std::uint64_t iter_ = 0;    // within stage
  std::uint64_t global_ = 0;  // across stages
  EncoderParams encoder_;
  SgdState velocity_;
  Matrix head_;
  PrototypeStore store_;
  DominantQueues queues_;
  LrSchedule schedule_;
  std::vector<double> stage_losses_;
  RunRecord record_;
};

/// Convenience wrapper: trains to completion.
RunRecord run_plan(const CvcPlan& plan, const MultiSampleDataset* thick,
                   const BisampleDataset& train, EncoderParams* encoder_out = nullptr,
                   TrainerOptions options = {});

/// VR at each FAR target of the encoder on a bisample test set.
std::vector<FarPoint> evaluate(const EncoderParams& params, const BisampleDataset& test,
                               std::span<const double> far_targets);

/// Model dims {in, hidden..., D} implied by a plan for inputs of width `in`.
std::vector<std::size_t> model_dims(const CvcPlan& plan, std::size_t input_dim);

}  // namespace lbl
