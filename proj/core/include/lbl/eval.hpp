#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "lbl/datagen.hpp"
#include "lbl/encoder.hpp"

namespace lbl {

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

/// Cosine scores for every (ID_i, spot_j) pair; i == j is genuine.
ScoreSet score_features(const Matrix& id_features, const Matrix& spot_features);
ScoreSet score_pairs(const EncoderParams& params, const BisampleDataset& test,
                     const TestPairs& pairs);

struct FarPoint {
  double far_target = 0.0;
  double achieved_far = 0.0;
  double threshold = 0.0;
  double vr = 0.0;
};

/// For each target: the smallest observed score whose impostor pass rate
/// (score >= threshold) does not exceed the target, and the genuine pass
/// rate there. Targets below 1/|impostors| raise ResolutionError.
std::vector<FarPoint> vr_at_far(const ScoreSet& scores, std::span<const double> far_targets);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;
  double vr = 0.0;
};

/// Empirical ROC: one point per distinct score, thresholds descending.
struct RocCurve {
  std::vector<RocPoint> points;
};

RocCurve roc(const ScoreSet& scores);

void write_far_csv(const std::filesystem::path& path, std::span<const FarPoint> points);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);
/// Static SVG of VR against log10(FAR).
void write_roc_svg(const std::filesystem::path& path, const RocCurve& curve);

}  // namespace lbl
