#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lbl/datagen.hpp"
#include "lbl/domqueue.hpp"
#include "lbl/encoder.hpp"
#include "lbl/protostore.hpp"
#include "lbl/ver_loss.hpp"

namespace lbl {

struct ReplayConfig {
  std::uint64_t seed = 1;
  std::size_t batch_classes = 32;
  std::size_t batches = 8;
  double scale = 16.0;
};

/// Replay batch b: an N-pairs batch drawn from the Eval stream of `seed`.
BatchPlan replay_batch(std::size_t n_classes, const ReplayConfig& cfg, std::size_t b);

/// Plain-softmax probabilities of the batch rows against every prototype.
Matrix full_probs(const Matrix& features, const Matrix& prototypes, double scale);

/// CE_K averaged over the replay batches (full softmax over all classes).
std::vector<double> replay_ce(const EncoderParams& params, const PrototypeStore& store,
                              const BisampleDataset& data, std::span<const std::size_t> ks,
                              const ReplayConfig& cfg);

/// Default K grid for N classes: 1, then 0.1%..100% of N, deduplicated.
std::vector<std::size_t> k_grid(std::size_t n_classes);

struct DiagnoseReport {
  std::vector<std::size_t> ks;
  std::vector<double> ce;
  bool has_queues = false;
  QueueCaseHistogram cases;
};

/// CE_K curve plus, when queues are given, the case histogram that replaying
/// the batches through update_queues (on a copy) would produce.
DiagnoseReport diagnose(const EncoderParams& params, const PrototypeStore& store,
                        const DominantQueues* queues, const BisampleDataset& data,
                        std::span<const std::size_t> ks, const ReplayConfig& cfg);

void write_ce_csv(const std::filesystem::path& path, const DiagnoseReport& report);
void write_cases_csv(const std::filesystem::path& path, const DiagnoseReport& report);

}  // namespace lbl
