#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lbl/numkit.hpp"
#include "lbl/rng.hpp"

namespace lbl {

/// Rows of the prototype matrix resident for one iteration. `class_ids` is
/// the selected class list, positives first in batch order.
struct WorkingSet {
  std::vector<std::uint32_t> class_ids;
  Matrix rows;  // class_ids.size() x D, copied out of the store
  std::uint64_t origin_version = 0;
};

/// Running totals of rows moved between the store and working sets; the
/// portable stand-in for device copy cost.
struct SyncCounters {
  std::uint64_t rows_copied_out = 0;
  std::uint64_t rows_written_back = 0;
};

/// Full N x D prototype matrix in host memory. Rows stay unit-norm: every
/// write-back re-normalizes the rows it changed. Single writer; readers may
/// snapshot between write-backs.
class PrototypeStore {
 public:
  PrototypeStore() = default;
  /// Rows are normalized on construction.
  explicit PrototypeStore(Matrix w);

  std::size_t num_classes() const { return w_.rows(); }
  std::size_t dim() const { return w_.cols(); }
  std::uint64_t version() const { return version_; }
  const Matrix& matrix() const { return w_; }
  std::span<const double> row(std::uint32_t class_id) const { return w_.row(class_id); }
  const SyncCounters& counters() const { return counters_; }

  /// Copies the listed rows into a new working set.
  WorkingSet extract(std::vector<std::uint32_t> class_ids);

  /// Replaces exactly the rows of `ws.class_ids` with `updated` and bumps the
  /// version. Rows identical to their extracted copy are left untouched.
  void write_back(const WorkingSet& ws, const Matrix& updated);

  /// Resume support: restore raw state without renormalizing.
  static PrototypeStore restore(Matrix w, std::uint64_t version, SyncCounters counters);

 private:
  Matrix w_;
  std::uint64_t version_ = 0;
  SyncCounters counters_;
};

enum class PrototypeMode { Id, Avg };

/// Builds the store from per-class ID and spot features. Avg mode uses the
/// normalized midpoint; a class whose midpoint is degenerate falls back to
/// its ID feature and is reported through `fallbacks`.
PrototypeStore init_from_features(const Matrix& id_features, const Matrix& spot_features,
                                  PrototypeMode mode,
                                  std::vector<std::uint32_t>* fallbacks = nullptr);

/// Selected class list for random prototype selection: the distinct batch
/// labels in first-seen order, then uniformly drawn distinct fillers.
std::vector<std::uint32_t> select_random_ids(std::span<const std::uint32_t> labels,
                                             std::size_t n_iter, std::size_t n_classes, Rng& rng);

WorkingSet select_random(PrototypeStore& store, std::span<const std::uint32_t> labels,
                         std::size_t n_iter, Rng& rng);

/// Appends distinct random fillers to `ids` until it holds n_iter entries.
/// `ids` must already be duplicate-free.
void fill_random(std::vector<std::uint32_t>& ids, std::size_t n_iter, std::size_t n_classes,
                 Rng& rng);

struct EnergyReport {
  std::vector<std::uint32_t> negative_classes;  // sorted by energy, descending
  std::vector<double> energy;                   // aligned with negative_classes
  std::vector<std::size_t> ks;
  std::vector<double> ce;  // cumulative share of the top-k energies
};

/// Negative-prototype energies E(i) = sum_j p_ij for classes no batch row
/// belongs to, and the top-K cumulative share CE_K for each requested K
/// (clamped to the number of negatives).
EnergyReport energy_report(const Matrix& probs, std::span<const std::uint32_t> class_ids,
                           std::span<const std::uint32_t> labels, std::span<const std::size_t> ks);

/// LBLP prototype checkpoint (f32 rows).
void save_prototypes(const std::filesystem::path& path, const PrototypeStore& store);
PrototypeStore load_prototypes(const std::filesystem::path& path);

}  // namespace lbl
