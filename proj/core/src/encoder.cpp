#include "lbl/encoder.hpp"

#include <cmath>
#include <string>

#include "lbl/binio.hpp"
#include "lbl/rng.hpp"

namespace lbl {

std::size_t EncoderParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

std::size_t EncoderParams::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

void EncoderParams::validate() const {
  require(!layers.empty(), Errc::ShapeError, "encoder has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Layer& l = layers[k];
    require(l.bias.size() == l.weight.rows(), Errc::ShapeError,
            "layer " + std::to_string(k) + " bias length mismatch");
    if (k + 1 < layers.size())
      require(layers[k + 1].weight.cols() == l.weight.rows(), Errc::ShapeError,
              "layer " + std::to_string(k) + " output does not chain into next layer");
  }
}

EncoderParams init_encoder(std::span<const std::size_t> dims, std::uint64_t seed) {
  require(dims.size() >= 2, Errc::InvalidArgument, "encoder needs at least input and output dims");
  Rng rng = Rng::stream(seed, Stream::Init);
  EncoderParams p;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t in = dims[k], out = dims[k + 1];
    Layer l{Matrix(out, in), std::vector<double>(out, 0.0),
            k + 2 == dims.size() ? Activation::Identity : Activation::Relu};
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : l.weight.data()) w = rng.uniform(-limit, limit);
    p.layers.push_back(std::move(l));
  }
  return p;
}

namespace {

Matrix affine(const Layer& l, const Matrix& h) {
  Matrix z = matmul_bt(h, l.weight);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto zr = z.row(r);
    for (std::size_t c = 0; c < zr.size(); ++c) zr[c] += l.bias[c];
  }
  return z;
}

void activate(Activation a, Matrix& z) {
  if (a == Activation::Relu)
    for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
}

void check_input(const EncoderParams& params, const Matrix& inputs) {
  params.validate();
  require(inputs.cols() == params.input_dim(), Errc::ShapeError,
          "input dim " + std::to_string(inputs.cols()) + " != encoder input dim " +
              std::to_string(params.input_dim()));
  require(all_finite(inputs.data()), Errc::NonFinite, "encoder input contains NaN/Inf");
}

}  // namespace

ForwardResult forward(const EncoderParams& params, const Matrix& inputs) {
  check_input(params, inputs);
  ForwardResult res;
  Tape& t = res.tape;
  t.generation = params.generation;
  Matrix h = inputs;
  for (const Layer& l : params.layers) {
    t.layer_inputs.push_back(h);
    Matrix z = affine(l, h);
    t.pre_activations.push_back(z);
    activate(l.activation, z);
    h = std::move(z);
  }
  t.raw_output = h;
  t.output_norms.resize(h.rows());
  for (std::size_t r = 0; r < h.rows(); ++r) {
    t.output_norms[r] = norm2(h.row(r));
    l2_normalize_inplace(h.row(r));
  }
  res.features = std::move(h);
  return res;
}

Matrix encode(const EncoderParams& params, const Matrix& inputs) {
  check_input(params, inputs);
  Matrix h = inputs;
  for (const Layer& l : params.layers) {
    Matrix z = affine(l, h);
    activate(l.activation, z);
    h = std::move(z);
  }
  normalize_rows(h);
  return h;
}

EncoderGrads backward(const EncoderParams& params, const Tape& tape, const Matrix& upstream) {
  require(tape.generation == params.generation &&
              tape.layer_inputs.size() == params.layers.size(),
          Errc::TapeMismatch, "tape was recorded against different parameters");
  const Matrix& y = tape.raw_output;
  require(upstream.rows() == y.rows() && upstream.cols() == y.cols(), Errc::ShapeError,
          "upstream gradient shape does not match features");

  // d(y/|y|)/dy applied to g: (g - x (x.g)) / |y|
  Matrix grad(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const double n = tape.output_norms[r];
    auto yr = y.row(r);
    auto gr = upstream.row(r);
    double xg = 0.0;
    for (std::size_t c = 0; c < yr.size(); ++c) xg += (yr[c] / n) * gr[c];
    auto out = grad.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) out[c] = (gr[c] - (yr[c] / n) * xg) / n;
  }

  EncoderGrads g;
  const std::size_t L = params.layers.size();
  g.weight.resize(L);
  g.bias.resize(L);
  for (std::size_t k = L; k-- > 0;) {
    const Layer& l = params.layers[k];
    if (l.activation == Activation::Relu) {
      const Matrix& z = tape.pre_activations[k];
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (z.data()[i] <= 0.0) grad.data()[i] = 0.0;
    }
    g.weight[k] = matmul_at(grad, tape.layer_inputs[k]);
    g.bias[k].assign(l.bias.size(), 0.0);
    for (std::size_t r = 0; r < grad.rows(); ++r) {
      auto gr = grad.row(r);
      for (std::size_t c = 0; c < gr.size(); ++c) g.bias[k][c] += gr[c];
    }
    grad = matmul(grad, l.weight);
  }
  g.input = std::move(grad);
  return g;
}

SgdState SgdState::zeros_like(const EncoderParams& params) {
  SgdState s;
  for (const Layer& l : params.layers) {
    s.weight_velocity.emplace_back(l.weight.rows(), l.weight.cols());
    s.bias_velocity.emplace_back(l.bias.size(), 0.0);
  }
  return s;
}

void sgd_step(EncoderParams& params, SgdState& state, const EncoderGrads& grads, double lr,
              double momentum, double weight_decay) {
  require(weight_decay >= 0.0, Errc::InvalidArgument, "weight_decay must be non-negative");
  const std::size_t L = params.layers.size();
  require(grads.weight.size() == L && grads.bias.size() == L, Errc::ShapeError,
          "gradient layer count mismatch");
  if (state.weight_velocity.size() != L) state = SgdState::zeros_like(params);
  for (std::size_t k = 0; k < L; ++k) {
    require(grads.weight[k].rows() == params.layers[k].weight.rows() &&
                grads.weight[k].cols() == params.layers[k].weight.cols() &&
                grads.bias[k].size() == params.layers[k].bias.size(),
            Errc::ShapeError, "gradient shape mismatch at layer " + std::to_string(k));
    require(all_finite(grads.weight[k].data()) && all_finite(grads.bias[k]), Errc::NonFinite,
            "non-finite gradient at layer " + std::to_string(k));
  }
  for (std::size_t k = 0; k < L; ++k) {
    auto w = params.layers[k].weight.data();
    auto vw = state.weight_velocity[k].data();
    auto gw = grads.weight[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      vw[i] = momentum * vw[i] - lr * (gw[i] + weight_decay * w[i]);
      w[i] += vw[i];
    }
    auto& b = params.layers[k].bias;
    auto& vb = state.bias_velocity[k];
    for (std::size_t i = 0; i < b.size(); ++i) {
      vb[i] = momentum * vb[i] - lr * grads.bias[k][i];
      b[i] += vb[i];
    }
  }
  ++params.generation;
}

LrSchedule::LrSchedule(double base_lr, std::size_t window, std::size_t patience,
                       double min_improvement, int max_drops)
    : lr_(base_lr),
      window_(window),
      patience_(patience),
      min_improvement_(min_improvement),
      max_drops_(max_drops) {
  require(window > 0, Errc::InvalidArgument, "schedule window must be positive");
}

bool LrSchedule::observe(double loss) {
  window_sum_ += loss;
  if (++window_count_ < window_) return false;
  const double mean = window_sum_ / static_cast<double>(window_count_);
  window_sum_ = 0.0;
  window_count_ = 0;
  if (!has_best_ || mean < best_ - min_improvement_) {
    best_ = mean;
    has_best_ = true;
    stalls_ = 0;
    return false;
  }
  if (++stalls_ < patience_ || drops_ >= max_drops_) return false;
  stalls_ = 0;
  ++drops_;
  lr_ /= 10.0;
  return true;
}

LrSchedule::State LrSchedule::state() const {
  return {lr_, best_, window_sum_, window_count_, stalls_, drops_, has_best_};
}

void LrSchedule::restore(const State& s) {
  lr_ = s.lr;
  best_ = s.best;
  window_sum_ = s.window_sum;
  window_count_ = s.window_count;
  stalls_ = s.stalls;
  drops_ = s.drops;
  has_best_ = s.has_best;
}

void save_encoder(const std::filesystem::path& path, const EncoderParams& params) {
  params.validate();
  binio::Writer w(path);
  w.magic("LBLM");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(params.layers.size()));
  for (const Layer& l : params.layers) {
    w.u32(static_cast<std::uint32_t>(l.weight.rows()));
    w.u32(static_cast<std::uint32_t>(l.weight.cols()));
    w.u32(static_cast<std::uint32_t>(l.activation));
    w.f32_span(l.weight.data());
    w.f32_span(l.bias);
  }
  w.close();
}

EncoderParams load_encoder(const std::filesystem::path& path) {
  binio::Reader r(path);
  r.expect_magic("LBLM");
  const std::uint32_t version = r.u32();
  require(version == 1, Errc::FormatError, "unsupported LBLM version " + std::to_string(version));
  const std::uint32_t n = r.u32();
  EncoderParams p;
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::uint32_t out = r.u32(), in = r.u32(), tag = r.u32();
    require(tag <= 1, Errc::FormatError, "unknown activation tag " + std::to_string(tag));
    Layer l{Matrix(out, in), std::vector<double>(out), static_cast<Activation>(tag)};
    r.f32_into(l.weight.data());
    r.f32_into(l.bias);
    p.layers.push_back(std::move(l));
  }
  r.expect_eof();
  p.validate();
  return p;
}

}  // namespace lbl
