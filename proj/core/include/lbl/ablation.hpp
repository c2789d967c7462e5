#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lbl/datagen.hpp"
#include "lbl/plan.hpp"

namespace lbl {

struct AblationConfig {
  CvcPlan base;
  GenSpec thick_spec;
  GenSpec train_spec;
  GenSpec test_spec;
  std::uint32_t thick_samples = 16;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double far = 1e-3;
};

/// Desk-scale grid: 500 thick classes x 16, 5000 training classes, 500 test
/// classes, with disjoint identity ranges, look-alike families of 8 and
/// doubled nuisance.
AblationConfig default_ablation_config();

struct AblationData {
  MultiSampleDataset thick;
  BisampleDataset train;
  BisampleDataset test;
};

/// Datasets of one seed. The world and every split are re-drawn per seed.
AblationData make_ablation_data(const AblationConfig& cfg, std::uint64_t seed);

struct AblationRow {
  std::string suite;
  std::string arm;
  std::uint64_t seed = 0;
  double vr = 0.0;
  double achieved_far = 0.0;
  double threshold = 0.0;
  bool not_converged = false;  // last trained stage
  double final_loss = 0.0;     // last-window mean of the last trained stage
  double selected_per_iter = 0.0;
  double rows_synced_per_iter = 0.0;
  double ce_start = 0.0;
  double ce_end = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  /// VR of one arm, in seed order.
  std::vector<double> values(const std::string& suite, const std::string& arm) const;
  const AblationRow* find(const std::string& suite, const std::string& arm,
                          std::uint64_t seed) const;
  double median(const std::string& suite, const std::string& arm) const;
  std::vector<std::string> arms(const std::string& suite) const;

  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
  /// suite,arm,median_vr,seeds
  void write_summary_csv(const std::filesystem::path& path) const;
};

/// Names accepted by run_ablation.
const std::vector<std::string>& ablation_suites();

/// Arm plans of a suite for a base plan and N training classes.
struct ArmSpec {
  std::string name;
  CvcPlan plan;
  double train_fraction = 1.0;
};
std::vector<ArmSpec> suite_arms(const std::string& suite, const CvcPlan& base,
                                std::size_t n_classes);

using AblationProgress = std::function<void(const AblationRow&)>;

/// Runs the named suites over every seed. Stages shared between arms of the
/// same seed (same plan prefix, same training subset) are trained once.
/// Unknown suite names raise InvalidArgument before any work.
AblationTable run_ablations(std::span<const std::string> suites, const AblationConfig& cfg,
                            const AblationProgress& progress = {});
AblationTable run_ablation(const std::string& suite, const AblationConfig& cfg,
                           const AblationProgress& progress = {});

}  // namespace lbl
