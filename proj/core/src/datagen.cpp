#include "lbl/datagen.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "lbl/binio.hpp"
#include "lbl/rng.hpp"

namespace lbl {

void GenSpec::validate() const {
  auto rate_ok = [](double r) { return r >= 0.0 && r < 1.0; };
  require(n_classes >= 1, Errc::InvalidArgument, "n_classes must be positive");
  require(input_dim >= 1 && latent_dim >= 1, Errc::InvalidArgument, "dims must be positive");
  require(id_noise_sigma >= 0.0 && spot_noise_sigma >= id_noise_sigma, Errc::InvalidArgument,
          "need 0 <= id_noise_sigma <= spot_noise_sigma");
  require(rate_ok(mislabel_rate) && rate_ok(low_quality_rate), Errc::InvalidArgument,
          "mislabel_rate and low_quality_rate must lie in [0, 1)");
  require(heterogeneity_shift >= 0.0 && spot_nuisance >= 0.0 && wild_nuisance >= 0.0 &&
              wild_noise_sigma >= 0.0 && low_quality_sigma >= 0.0,
          Errc::InvalidArgument, "noise magnitudes must be non-negative");
  require(family_size >= 1 && family_spread > 0.0 && family_spread <= 1.0,
          Errc::InvalidArgument, "need family_size >= 1 and family_spread in (0, 1]");
  require(wild_overlap >= 0.0 && wild_overlap <= 1.0, Errc::InvalidArgument,
          "wild_overlap must lie in [0, 1]");
}

namespace {

constexpr std::uint64_t kLatentTag = 0x4c41544eULL;
constexpr std::uint64_t kSampleTag = 0x534d504cULL;
constexpr std::uint64_t kPickTag = 0x5049434bULL;
constexpr std::uint64_t kNoiseTag = 0x4e4f4953ULL;
constexpr std::uint64_t kFamilyTag = 0x46414d49ULL;

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct World {
  Matrix projection;  // input x latent
  Matrix spot_basis;  // input x nuisance
  Matrix wild_basis;  // input x nuisance
  std::vector<double> shift_dir;
};

World make_world(const GenSpec& s) {
  Rng rng = Rng::stream(s.world_seed, Stream::World);
  World w;
  w.projection = Matrix(s.input_dim, s.latent_dim);
  const double ps = 1.0 / std::sqrt(static_cast<double>(s.latent_dim));
  for (double& v : w.projection.data()) v = rng.normal() * ps;
  const std::uint32_t nd = std::max<std::uint32_t>(s.nuisance_dim, 1);
  const double ns = 1.0 / std::sqrt(static_cast<double>(nd));
  w.spot_basis = Matrix(s.input_dim, nd);
  for (double& v : w.spot_basis.data()) v = rng.normal() * ns;
  w.wild_basis = Matrix(s.input_dim, nd);
  for (double& v : w.wild_basis.data()) v = rng.normal() * ns;
  const auto shared = static_cast<std::uint32_t>(std::lround(s.wild_overlap * nd));
  for (std::uint32_t r = 0; r < s.input_dim; ++r)
    for (std::uint32_t c = 0; c < shared; ++c) w.wild_basis(r, c) = w.spot_basis(r, c);
  w.shift_dir.resize(s.input_dim);
  for (double& v : w.shift_dir) v = rng.normal();
  l2_normalize_inplace(w.shift_dir);
  return w;
}

Rng class_stream(const GenSpec& s, std::uint32_t c, std::uint64_t tag, std::uint64_t k = 0) {
  const std::uint64_t g = s.class_offset + c;
  return Rng(mix_seed(mix_seed(mix_seed(s.seed, g), tag), k));
}

std::vector<double> latent(const GenSpec& s, std::uint32_t c) {
  Rng rng = class_stream(s, c, kLatentTag);
  std::vector<double> z(s.latent_dim);
  for (double& v : z) v = rng.normal();
  if (s.family_size <= 1) return z;
  const std::uint64_t family = (s.class_offset + c) / s.family_size;
  Rng frng(mix_seed(mix_seed(s.seed, family), kFamilyTag));
  const double r = s.family_spread;
  const double keep = std::sqrt(1.0 - r * r);
  for (double& v : z) v = keep * frng.normal() + r * v;
  return z;
}

// projection * z + sigma * iso + nu * basis * n + shift, rounded to f32.
std::vector<double> compose(const World& w, const GenSpec& s, std::span<const double> z,
                            double sigma, double nu, const Matrix* basis, double shift,
                            Rng& rng) {
  std::vector<double> x(s.input_dim, 0.0);
  for (std::uint32_t r = 0; r < s.input_dim; ++r) x[r] = dot(w.projection.row(r), z);
  for (double& v : x) v += sigma * rng.normal();
  if (basis && nu > 0.0) {
    std::vector<double> n(basis->cols());
    for (double& v : n) v = rng.normal();
    for (std::uint32_t r = 0; r < s.input_dim; ++r) x[r] += nu * dot(basis->row(r), n);
  }
  const double mag = shift * std::sqrt(static_cast<double>(s.input_dim));
  for (std::uint32_t r = 0; r < s.input_dim; ++r) x[r] = to_f32(x[r] + mag * w.shift_dir[r]);
  return x;
}

std::vector<std::uint32_t> pick_classes(const GenSpec& s, std::uint64_t tag, std::size_t count) {
  Rng rng = Rng::stream(mix_seed(s.seed, tag), Stream::Datagen);
  return rng.sample_without_replacement(s.n_classes, static_cast<std::uint32_t>(count));
}

}  // namespace

BisampleDataset generate(const GenSpec& spec) {
  spec.validate();
  const World w = make_world(spec);
  BisampleDataset d;
  d.spec = spec;
  d.id_inputs = Matrix(spec.n_classes, spec.input_dim);
  d.spot_inputs = Matrix(spec.n_classes, spec.input_dim);
  d.flags.assign(spec.n_classes, 0);

  const auto n_lq = static_cast<std::size_t>(std::floor(spec.low_quality_rate * spec.n_classes));
  std::vector<bool> low_quality(spec.n_classes, false);
  for (std::uint32_t c : pick_classes(spec, kNoiseTag + 1, n_lq)) low_quality[c] = true;

  for (std::uint32_t c = 0; c < spec.n_classes; ++c) {
    const auto z = latent(spec, c);
    Rng rng = class_stream(spec, c, kSampleTag);
    const auto id = compose(w, spec, z, spec.id_noise_sigma, 0.0, nullptr, 0.0, rng);
    const double spot_sigma = low_quality[c] ? spec.low_quality_sigma : spec.spot_noise_sigma;
    const auto spot = compose(w, spec, z, spot_sigma, spec.spot_nuisance, &w.spot_basis,
                              spec.heterogeneity_shift, rng);
    std::copy(id.begin(), id.end(), d.id_inputs.row(c).begin());
    std::copy(spot.begin(), spot.end(), d.spot_inputs.row(c).begin());
    if (low_quality[c]) d.flags[c] |= static_cast<std::uint8_t>(ClassFlag::LowQuality);
  }

  // Mislabels swap spot samples between pairs of classes, so every class
  // still owns exactly two samples.
  std::size_t n_mis = static_cast<std::size_t>(std::floor(spec.mislabel_rate * spec.n_classes));
  n_mis -= n_mis % 2;
  const auto swapped = pick_classes(spec, kNoiseTag + 2, n_mis);
  for (std::size_t i = 0; i + 1 < swapped.size(); i += 2) {
    auto a = d.spot_inputs.row(swapped[i]);
    auto b = d.spot_inputs.row(swapped[i + 1]);
    std::swap_ranges(a.begin(), a.end(), b.begin());
    d.flags[swapped[i]] |= static_cast<std::uint8_t>(ClassFlag::Mislabel);
    d.flags[swapped[i + 1]] |= static_cast<std::uint8_t>(ClassFlag::Mislabel);
  }
  return d;
}

BisampleDataset BisampleDataset::head(std::size_t n) const {
  require(n >= 1 && n <= n_classes(), Errc::InvalidArgument, "head size out of range");
  BisampleDataset out;
  out.spec = spec;
  out.spec.n_classes = static_cast<std::uint32_t>(n);
  const std::size_t d = input_dim();
  auto copy = [&](const Matrix& m) {
    std::vector<double> v(m.data().begin(), m.data().begin() + static_cast<std::ptrdiff_t>(n * d));
    return Matrix(n, d, std::move(v));
  };
  out.id_inputs = copy(id_inputs);
  out.spot_inputs = copy(spot_inputs);
  out.flags.assign(flags.begin(), flags.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

std::vector<double> wild_sample(const GenSpec& spec, std::uint32_t c, std::uint32_t k) {
  const World w = make_world(spec);
  const auto z = latent(spec, c);
  Rng rng = class_stream(spec, c, kSampleTag, k + 1);
  return compose(w, spec, z, spec.wild_noise_sigma, spec.wild_nuisance, &w.wild_basis, 0.0, rng);
}

MultiSampleDataset generate_wild(const GenSpec& spec, std::uint32_t samples_per_class) {
  spec.validate();
  require(samples_per_class >= 1, Errc::InvalidArgument, "samples_per_class must be positive");
  const World w = make_world(spec);
  MultiSampleDataset d;
  d.spec = spec;
  d.samples_per_class = samples_per_class;
  d.inputs = Matrix(static_cast<std::size_t>(spec.n_classes) * samples_per_class, spec.input_dim);
  for (std::uint32_t c = 0; c < spec.n_classes; ++c) {
    const auto z = latent(spec, c);
    for (std::uint32_t k = 0; k < samples_per_class; ++k) {
      Rng rng = class_stream(spec, c, kSampleTag, k + 1);
      const auto x =
          compose(w, spec, z, spec.wild_noise_sigma, spec.wild_nuisance, &w.wild_basis, 0.0, rng);
      std::copy(x.begin(), x.end(), d.inputs.row(c * samples_per_class + k).begin());
    }
  }
  return d;
}

std::pair<std::uint32_t, std::uint32_t> mini_pick(const GenSpec& spec, std::uint32_t c,
                                                  std::uint32_t pool) {
  require(pool >= 2, Errc::InvalidArgument, "mini pool needs at least two samples");
  Rng rng = class_stream(spec, c, kPickTag);
  const auto two = rng.sample_without_replacement(pool, 2);
  return {two[0], two[1]};
}

ThickMiniSplit split_thick_mini(const GenSpec& thick_spec, const GenSpec& mini_spec,
                                std::uint32_t samples_per_class, std::uint32_t mini_pool) {
  const std::uint64_t a0 = thick_spec.class_offset, a1 = a0 + thick_spec.n_classes;
  const std::uint64_t b0 = mini_spec.class_offset, b1 = b0 + mini_spec.n_classes;
  require(a1 <= b0 || b1 <= a0, Errc::InvalidArgument,
          "thick and mini class-id ranges overlap");
  require(thick_spec.world_seed == mini_spec.world_seed, Errc::InvalidArgument,
          "thick and mini sets must share a world");
  mini_spec.validate();

  ThickMiniSplit out;
  out.thick = generate_wild(thick_spec, samples_per_class);
  BisampleDataset& m = out.mini;
  m.spec = mini_spec;
  m.id_inputs = Matrix(mini_spec.n_classes, mini_spec.input_dim);
  m.spot_inputs = Matrix(mini_spec.n_classes, mini_spec.input_dim);
  m.flags.assign(mini_spec.n_classes, 0);
  for (std::uint32_t c = 0; c < mini_spec.n_classes; ++c) {
    const auto [i, j] = mini_pick(mini_spec, c, mini_pool);
    const auto x = wild_sample(mini_spec, c, i);
    const auto y = wild_sample(mini_spec, c, j);
    std::copy(x.begin(), x.end(), m.id_inputs.row(c).begin());
    std::copy(y.begin(), y.end(), m.spot_inputs.row(c).begin());
  }
  return out;
}

TestPairs make_test_pairs(const BisampleDataset& test) { return TestPairs{test.n_classes()}; }

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / (norm2(a) * norm2(b));
}

}  // namespace

double mean_intra_similarity(const BisampleDataset& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.n_classes(); ++i)
    s += cosine(d.id_inputs.row(i), d.spot_inputs.row(i));
  return s / static_cast<double>(d.n_classes());
}

double mean_inter_similarity(const BisampleDataset& d) {
  const std::size_t n = d.n_classes();
  require(n >= 2, Errc::InvalidArgument, "inter-class similarity needs two classes");
  Matrix a = d.id_inputs, b = d.spot_inputs;
  normalize_rows(a);
  normalize_rows(b);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += dot(a.row(i), b.row(j));
  return s / static_cast<double>(n * (n - 1));
}

void save_bisample(const std::filesystem::path& path, const BisampleDataset& d) {
  binio::Writer w(path);
  w.magic("LBLD");
  w.u32(1);
  w.u64(d.n_classes());
  w.u32(static_cast<std::uint32_t>(d.input_dim()));
  for (std::size_t c = 0; c < d.n_classes(); ++c) {
    w.f32_span(d.id_inputs.row(c));
    w.f32_span(d.spot_inputs.row(c));
  }
  w.close();
}

BisampleDataset load_bisample(const std::filesystem::path& path) {
  binio::Reader r(path);
  r.expect_magic("LBLD");
  const std::uint32_t version = r.u32();
  require(version == 1, Errc::FormatError, "unsupported LBLD version " + std::to_string(version));
  const std::uint64_t n = r.u64();
  const std::uint32_t dim = r.u32();
  BisampleDataset d;
  d.id_inputs = Matrix(n, dim);
  d.spot_inputs = Matrix(n, dim);
  d.flags.assign(n, 0);
  for (std::size_t c = 0; c < n; ++c) {
    r.f32_into(d.id_inputs.row(c));
    r.f32_into(d.spot_inputs.row(c));
  }
  r.expect_eof();
  d.spec.n_classes = static_cast<std::uint32_t>(n);
  d.spec.input_dim = dim;
  return d;
}

void save_multisample(const std::filesystem::path& path, const MultiSampleDataset& d) {
  binio::Writer w(path);
  w.magic("LBLT");
  w.u32(1);
  w.u64(d.n_classes());
  w.u32(d.samples_per_class);
  w.u32(static_cast<std::uint32_t>(d.input_dim()));
  w.f32_span(d.inputs.data());
  w.close();
}

MultiSampleDataset load_multisample(const std::filesystem::path& path) {
  binio::Reader r(path);
  r.expect_magic("LBLT");
  const std::uint32_t version = r.u32();
  require(version == 1, Errc::FormatError, "unsupported LBLT version " + std::to_string(version));
  const std::uint64_t n = r.u64();
  const std::uint32_t s = r.u32();
  const std::uint32_t dim = r.u32();
  require(s >= 1, Errc::FormatError, "samples_per_class must be positive");
  MultiSampleDataset d;
  d.samples_per_class = s;
  d.inputs = Matrix(n * s, dim);
  r.f32_into(d.inputs.data());
  r.expect_eof();
  d.spec.n_classes = static_cast<std::uint32_t>(n);
  d.spec.input_dim = dim;
  return d;
}

void save_flags(const std::filesystem::path& path, const BisampleDataset& d) {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open for writing: " + path.string());
  out << "class_id,flag\n";
  for (std::size_t c = 0; c < d.flags.size(); ++c) {
    if (d.flags[c] & static_cast<std::uint8_t>(ClassFlag::Mislabel)) out << c << ",mislabel\n";
    if (d.flags[c] & static_cast<std::uint8_t>(ClassFlag::LowQuality))
      out << c << ",low_quality\n";
  }
  require(out.good(), Errc::IoError, "write failed: " + path.string());
}

}  // namespace lbl
