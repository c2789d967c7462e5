#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lbl/numkit.hpp"

namespace lbl {

enum class Activation : std::uint32_t { Identity = 0, Relu = 1 };

struct Layer {
  Matrix weight;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::Identity;

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Multilayer perceptron whose output rows are L2-normalized embeddings.
/// `generation` advances on every parameter update so tapes recorded against
/// older parameters are rejected by backward().
struct EncoderParams {
  std::vector<Layer> layers;
  std::uint64_t generation = 0;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  /// Throws ShapeError if layer dims do not chain.
  void validate() const;
};

/// dims = {in, hidden..., D}; hidden layers use relu, the last is identity.
/// Weights are Glorot-uniform from the Init stream of `seed`, biases zero.
EncoderParams init_encoder(std::span<const std::size_t> dims, std::uint64_t seed);

enum class SampleKind : std::uint8_t { Id = 0, Spot = 1 };

struct FeatureBatch {
  Matrix features;  // M x D, unit rows
  std::vector<std::uint32_t> labels;
  std::vector<SampleKind> kinds;

  std::size_t size() const { return features.rows(); }
};

/// Everything backward() needs to differentiate the composed network,
/// including the final normalization.
struct Tape {
  std::uint64_t generation = 0;
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
  Matrix raw_output;
  std::vector<double> output_norms;
};

struct ForwardResult {
  Matrix features;
  Tape tape;
};

ForwardResult forward(const EncoderParams& params, const Matrix& inputs);
/// Forward without recording; used by evaluation.
Matrix encode(const EncoderParams& params, const Matrix& inputs);

struct EncoderGrads {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;
  Matrix input;
};

EncoderGrads backward(const EncoderParams& params, const Tape& tape, const Matrix& upstream);

struct SgdState {
  std::vector<Matrix> weight_velocity;
  std::vector<std::vector<double>> bias_velocity;

  static SgdState zeros_like(const EncoderParams& params);
};

/// Classical momentum: v <- mu*v - lr*(g + wd*w); w <- w + v. Weight decay
/// applies to weights only, not biases.
void sgd_step(EncoderParams& params, SgdState& state, const EncoderGrads& grads, double lr,
              double momentum, double weight_decay = 0.0);

/// Divide-by-10 schedule driven by windowed mean loss. A window that fails to
/// beat the best window mean by `min_improvement` counts as a stall; after
/// `patience` consecutive stalls the rate drops, at most `max_drops` times.
class LrSchedule {
 public:
  LrSchedule() = default;
  LrSchedule(double base_lr, std::size_t window, std::size_t patience = 3,
             double min_improvement = 1e-4, int max_drops = 2);

  double lr() const { return lr_; }
  int drops() const { return drops_; }
  /// Returns true if this observation triggered a rate drop.
  bool observe(double loss);

  // Exposed for resume snapshots.
  struct State {
    double lr = 0.0;
    double best = 0.0;
    double window_sum = 0.0;
    std::uint64_t window_count = 0;
    std::uint64_t stalls = 0;
    std::int32_t drops = 0;
    bool has_best = false;
  };
  State state() const;
  void restore(const State& s);

 private:
  double lr_ = 0.0;
  std::size_t window_ = 500;
  std::size_t patience_ = 3;
  double min_improvement_ = 1e-4;
  int max_drops_ = 2;
  double best_ = 0.0;
  bool has_best_ = false;
  double window_sum_ = 0.0;
  std::size_t window_count_ = 0;
  std::size_t stalls_ = 0;
  int drops_ = 0;
};

/// LBLM checkpoint: f32 little-endian, bit-exact at f32 precision.
void save_encoder(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams load_encoder(const std::filesystem::path& path);

}  // namespace lbl
