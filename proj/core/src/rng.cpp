#include "lbl/rng.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

#include "lbl/error.hpp"

namespace lbl {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(splitmix64(a) ^ (b + 0x632be59bd9b4e019ULL));
}

Rng Rng::stream(std::uint64_t seed, Stream name, std::uint64_t counter) {
  return Rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(name)), counter));
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  require(n > 0, Errc::InvalidArgument, "uniform_index over empty range");
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

std::vector<std::uint32_t> Rng::sample_without_replacement(std::uint32_t n, std::uint32_t k) {
  require(k <= n, Errc::InvalidArgument, "cannot sample more values than the population");
  // Sparse Fisher-Yates: only displaced slots are materialized.
  std::unordered_map<std::uint32_t, std::uint32_t> displaced;
  std::vector<std::uint32_t> out;
  out.reserve(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::uint32_t>(i + uniform_index(n - i));
    auto at = [&](std::uint32_t p) {
      auto it = displaced.find(p);
      return it == displaced.end() ? p : it->second;
    };
    const std::uint32_t vj = at(j);
    const std::uint32_t vi = at(i);
    displaced[j] = vi;
    out.push_back(vj);
  }
  return out;
}

}  // namespace lbl
