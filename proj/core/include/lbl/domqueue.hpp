#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lbl/numkit.hpp"
#include "lbl/rng.hpp"

namespace lbl {

struct Neighbor {
  std::uint32_t id = 0;
  double distance = 0.0;  // cosine distance, 1 - cos

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// lists[i] holds the K classes nearest to class i (i excluded), ascending by
/// distance with ties broken by lower class id.
struct NearestClassGraph {
  std::size_t k = 0;
  std::vector<std::vector<Neighbor>> lists;
};

/// Backend that builds the nearest-class graph. The brute-force backend is
/// exact; an approximate index can be dropped in behind the same interface.
class NeighborIndex {
 public:
  virtual ~NeighborIndex() = default;
  virtual NearestClassGraph build(const Matrix& reference, std::size_t k) const = 0;
};

class BruteForceIndex final : public NeighborIndex {
 public:
  NearestClassGraph build(const Matrix& reference, std::size_t k) const override;
};

/// Exact kNN by cosine distance over unit reference features.
NearestClassGraph build_graph(const Matrix& reference, std::size_t k);

/// Per-class dominant queue Q_i (kept sorted by affinity, strongest first)
/// and the immutable candidate set C_i it may promote from.
struct DominantQueue {
  std::vector<std::uint32_t> members;
  std::vector<double> affinity;
  std::vector<std::uint32_t> candidates;         // graph order
  std::vector<std::uint32_t> sorted_candidates;  // for membership tests

  bool in_queue(std::uint32_t c) const;
  bool in_candidates(std::uint32_t c) const;
};

class DominantQueues {
 public:
  DominantQueues() = default;
  DominantQueues(std::vector<DominantQueue> queues, std::size_t q, std::size_t c);

  std::size_t num_classes() const { return queues_.size(); }
  std::size_t queue_capacity() const { return q_; }
  std::size_t candidate_capacity() const { return c_; }
  const DominantQueue& operator[](std::uint32_t i) const { return queues_[i]; }
  DominantQueue& operator[](std::uint32_t i) { return queues_[i]; }

  friend bool operator==(const DominantQueues&, const DominantQueues&);

 private:
  std::vector<DominantQueue> queues_;
  std::size_t q_ = 0;
  std::size_t c_ = 0;
};

/// Q_i = first q graph neighbours (affinity = -distance), C_i = first c.
DominantQueues init_queues(const NearestClassGraph& graph, std::size_t q = 100,
                           std::size_t c = 300);

/// Selected class list for dominant prototype selection: distinct batch
/// labels, then the deduplicated queue members of each label, then random
/// distinct fillers up to n_iter. Throws InvalidArgument if labels plus
/// queues already exceed n_iter.
std::vector<std::uint32_t> select_dominant(std::span<const std::uint32_t> labels,
                                           const DominantQueues& queues, std::size_t n_iter,
                                           Rng& rng);

enum class QueueCase { Correct, InQueue, Promote, RejectNoisy };

struct QueueUpdateDecision {
  QueueCase tag = QueueCase::Correct;
  std::uint32_t row = 0;
  std::uint32_t label = 0;
  std::uint32_t predicted = 0;
  std::optional<std::uint32_t> evicted;
};

/// Applies one prediction event per batch row. The predicted class is the
/// argmax of the row over the selected classes (ties: lowest class id).
std::vector<QueueUpdateDecision> update_queues(std::span<const std::uint32_t> labels,
                                               const Matrix& probs,
                                               std::span<const std::uint32_t> class_ids,
                                               DominantQueues& queues);

struct QueueCaseHistogram {
  std::uint64_t correct = 0;
  std::uint64_t in_queue = 0;
  std::uint64_t promote = 0;
  std::uint64_t reject_noisy = 0;

  void add(std::span<const QueueUpdateDecision> decisions);
};

/// LBLQ snapshot: affinities stored as f32.
void save_queues(const std::filesystem::path& path, const DominantQueues& queues);
DominantQueues load_queues(const std::filesystem::path& path);

}  // namespace lbl
