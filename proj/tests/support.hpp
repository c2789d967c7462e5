#pragma once

#include <cstdint>
#include <vector>

#include "lbl/numkit.hpp"
#include "lbl/rng.hpp"

namespace lbl::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline Matrix random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m = random_matrix(rows, cols, rng);
  normalize_rows(m);
  return m;
}

/// Each of the M rows gets a distinct positive column drawn from [0, n).
inline std::vector<std::uint32_t> random_positive_cols(std::size_t m, std::size_t n, Rng& rng) {
  std::vector<std::uint32_t> out(m);
  for (auto& c : out) c = static_cast<std::uint32_t>(rng.uniform_index(n));
  return out;
}

}  // namespace lbl::test
