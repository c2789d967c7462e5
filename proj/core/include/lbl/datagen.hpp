#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lbl/numkit.hpp"

namespace lbl {

/// Parameters of the synthetic bisample generator. Magnitudes are relative
/// to the identity signal, whose per-coordinate RMS is 1.
///
/// Every class draws a latent identity z. Its ID sample is  P z + id noise;
/// its spot sample is  P z + spot noise + structured nuisance + shift,
/// where P, the nuisance basis and the shift direction belong to the "world"
/// (shared by every dataset built from the same world_seed).
struct GenSpec {
  std::uint32_t n_classes = 5000;
  std::uint32_t input_dim = 64;
  std::uint32_t latent_dim = 16;
  double id_noise_sigma = 0.05;
  double spot_noise_sigma = 0.25;
  double heterogeneity_shift = 0.3;
  double mislabel_rate = 0.01;
  double low_quality_rate = 0.02;
  std::uint64_t seed = 1;

  std::uint64_t world_seed = 7;
  /// Global id of local class 0; keeps class streams of different splits apart.
  std::uint64_t class_offset = 0;
  std::uint32_t nuisance_dim = 8;
  /// Scale of the low-rank spot-side nuisance (pose / illumination stand-in).
  double spot_nuisance = 1.0;
  /// Scale of the low-rank nuisance in wild (multi-sample) data.
  double wild_nuisance = 1.0;
  /// Isotropic noise of wild samples.
  double wild_noise_sigma = 0.25;
  /// Fraction of the wild nuisance basis shared with the spot basis.
  double wild_overlap = 0.5;
  /// Isotropic noise of a low-quality spot replacement.
  double low_quality_sigma = 1.5;
  /// Look-alike families: classes with the same global id / family_size share
  /// a family latent m and draw z = sqrt(1 - r^2) m + r e. Each z stays
  /// marginally standard normal. 1 disables families.
  std::uint32_t family_size = 1;
  double family_spread = 0.5;

  /// Throws InvalidArgument on an inconsistent spec.
  void validate() const;
};

enum class ClassFlag : std::uint8_t { Clean = 0, Mislabel = 1, LowQuality = 2 };

/// Exactly two raw samples per class: the ID sample and the spot sample.
struct BisampleDataset {
  Matrix id_inputs;    // n x input_dim
  Matrix spot_inputs;  // n x input_dim
  std::vector<std::uint8_t> flags;  // bitwise OR of ClassFlag values; not read by training
  GenSpec spec;

  std::size_t n_classes() const { return id_inputs.rows(); }
  std::size_t input_dim() const { return id_inputs.cols(); }
  /// Subset restricted to the first `n` classes (identity-volume studies).
  BisampleDataset head(std::size_t n) const;
};

/// S samples per class from the wild domain; class c owns rows [c*S, c*S+S).
struct MultiSampleDataset {
  Matrix inputs;
  std::uint32_t samples_per_class = 0;
  GenSpec spec;

  std::size_t n_classes() const {
    return samples_per_class == 0 ? 0 : inputs.rows() / samples_per_class;
  }
  std::size_t input_dim() const { return inputs.cols(); }
};

BisampleDataset generate(const GenSpec& spec);

/// Wild-domain samples: `samples_per_class` per class, no ID/spot split.
MultiSampleDataset generate_wild(const GenSpec& spec, std::uint32_t samples_per_class);

/// One wild sample of local class `c`, draw index `k`. Pure function of its
/// arguments; generate_wild and split_thick_mini are built from it.
std::vector<double> wild_sample(const GenSpec& spec, std::uint32_t c, std::uint32_t k);

struct ThickMiniSplit {
  MultiSampleDataset thick;
  BisampleDataset mini;
};

/// Thick set: `samples_per_class` wild samples per class. Mini set: for each
/// class a pool of `mini_pool` wild samples from which two distinct draws are
/// picked at random. Global class ranges must not overlap.
ThickMiniSplit split_thick_mini(const GenSpec& thick_spec, const GenSpec& mini_spec,
                                std::uint32_t samples_per_class = 16,
                                std::uint32_t mini_pool = 16);

/// Indices into a mini pool chosen for class `c` (the two picked draws).
std::pair<std::uint32_t, std::uint32_t> mini_pick(const GenSpec& spec, std::uint32_t c,
                                                  std::uint32_t pool);

/// All ID x spot cross pairs of an n-class bisample test set. Pair (i, j)
/// compares ID sample i with spot sample j; it is genuine iff i == j.
struct TestPairs {
  std::size_t n = 0;

  std::size_t genuine_count() const { return n; }
  std::size_t impostor_count() const { return n * (n - 1); }
  std::size_t size() const { return n * n; }
};

TestPairs make_test_pairs(const BisampleDataset& test);

/// Mean cosine of (ID_i, spot_i) and of (ID_i, spot_j), i != j, on raw inputs.
double mean_intra_similarity(const BisampleDataset& d);
double mean_inter_similarity(const BisampleDataset& d);

// LBLD (bisample) and LBLT (multi-sample) files; inputs stored as f32. The
// generator already rounds values to f32 so a write/read cycle is exact.
void save_bisample(const std::filesystem::path& path, const BisampleDataset& d);
BisampleDataset load_bisample(const std::filesystem::path& path);
void save_multisample(const std::filesystem::path& path, const MultiSampleDataset& d);
MultiSampleDataset load_multisample(const std::filesystem::path& path);

/// Sidecar manifest: "class_id,flag" lines for injected noise.
void save_flags(const std::filesystem::path& path, const BisampleDataset& d);

}  // namespace lbl
