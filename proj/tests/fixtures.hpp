#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "lbl/pipeline.hpp"

namespace lbl::test {

/// A small three-stage problem that trains in well under a second.
struct TinySetup {
  MultiSampleDataset thick;
  BisampleDataset train;
  BisampleDataset test;
  CvcPlan plan;
};

inline TinySetup tiny_setup(std::uint64_t seed = 1) {
  TinySetup t;
  GenSpec base;
  base.input_dim = 24;
  base.latent_dim = 8;
  base.nuisance_dim = 4;
  base.world_seed = mix_seed(7, seed);
  GenSpec thick = base, train = base, test = base;
  thick.n_classes = 40;
  thick.seed = mix_seed(seed, 1);
  train.n_classes = 200;
  train.class_offset = 1'000'000;
  train.seed = mix_seed(seed, 2);
  test.n_classes = 60;
  test.class_offset = 2'000'000;
  test.seed = mix_seed(seed, 3);
  t.thick = generate_wild(thick, 4);
  t.train = generate(train);
  t.test = generate(test);

  CvcPlan& p = t.plan;
  p.seed = seed;
  p.batch_classes = 8;
  p.hidden = {16};
  p.dim = 8;
  p.lr_window = 10;
  p.stage1.iterations = 30;
  p.stage2.iterations = 30;
  p.stage3.iterations = 30;
  p.stage3.n_iter = 40;
  p.stage3.q = 3;
  p.stage3.c = 6;
  return t;
}

inline double max_abs_diff(const EncoderParams& a, const EncoderParams& b) {
  if (a.layers.size() != b.layers.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    m = std::max(m, lbl::max_abs_diff(a.layers[l].weight, b.layers[l].weight));
    const auto& x = a.layers[l].bias;
    const auto& y = b.layers[l].bias;
    if (x.size() != y.size()) return INFINITY;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  }
  return m;
}

}  // namespace lbl::test
