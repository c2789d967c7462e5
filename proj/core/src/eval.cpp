#include "lbl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

namespace lbl {

ScoreSet score_features(const Matrix& id_features, const Matrix& spot_features) {
  require(id_features.rows() == spot_features.rows(), Errc::ShapeError,
          "ID and spot feature counts differ");
  require(id_features.cols() == spot_features.cols(), Errc::ShapeError,
          "ID and spot feature dims differ");
  const std::size_t n = id_features.rows();
  ScoreSet s;
  s.genuine.reserve(n);
  s.impostor.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = std::clamp(dot(id_features.row(i), spot_features.row(j)), -1.0, 1.0);
      (i == j ? s.genuine : s.impostor).push_back(v);
    }
  return s;
}

ScoreSet score_pairs(const EncoderParams& params, const BisampleDataset& test,
                     const TestPairs& pairs) {
  require(pairs.n == test.n_classes(), Errc::ShapeError, "pair list does not match test set");
  require(params.input_dim() == test.input_dim(), Errc::ShapeError,
          "encoder input dim does not match test inputs");
  return score_features(encode(params, test.id_inputs), encode(params, test.spot_inputs));
}

RocCurve roc(const ScoreSet& scores) {
  require(!scores.genuine.empty() && !scores.impostor.empty(), Errc::InvalidArgument,
          "ROC needs both genuine and impostor scores");
  std::vector<std::pair<double, bool>> all;
  all.reserve(scores.genuine.size() + scores.impostor.size());
  for (double g : scores.genuine) all.emplace_back(g, true);
  for (double i : scores.impostor) all.emplace_back(i, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  const double G = static_cast<double>(scores.genuine.size());
  const double I = static_cast<double>(scores.impostor.size());
  RocCurve curve;
  std::size_t gen = 0, imp = 0;
  for (std::size_t k = 0; k < all.size();) {
    const double t = all[k].first;
    for (; k < all.size() && all[k].first == t; ++k) (all[k].second ? gen : imp) += 1;
    curve.points.push_back({t, static_cast<double>(imp) / I, static_cast<double>(gen) / G});
  }
  return curve;
}

std::vector<FarPoint> vr_at_far(const ScoreSet& scores, std::span<const double> far_targets) {
  const RocCurve curve = roc(scores);
  const double I = static_cast<double>(scores.impostor.size());
  std::vector<FarPoint> out;
  for (double target : far_targets) {
    const double allowed = std::floor(target * I + 1e-9);
    require(allowed >= 1.0, Errc::ResolutionError,
            "FAR target " + std::to_string(target) + " is below the resolution of " +
                std::to_string(scores.impostor.size()) +
                " impostors; minimum supported FAR is " + std::to_string(1.0 / I));
    FarPoint p{target, 0.0, std::nextafter(curve.points.front().threshold,
                                           std::numeric_limits<double>::infinity()),
               0.0};
    for (const RocPoint& r : curve.points) {
      if (std::round(r.far * I) > allowed) break;
      p.threshold = r.threshold;
      p.achieved_far = r.far;
      p.vr = r.vr;
    }
    out.push_back(p);
  }
  return out;
}

void write_far_csv(const std::filesystem::path& path, std::span<const FarPoint> points) {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open for writing: " + path.string());
  out << "far_target,achieved_far,threshold,vr\n" << std::setprecision(10);
  for (const auto& p : points)
    out << p.far_target << ',' << p.achieved_far << ',' << p.threshold << ',' << p.vr << '\n';
  require(out.good(), Errc::IoError, "write failed: " + path.string());
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open for writing: " + path.string());
  out << "threshold,far,vr\n" << std::setprecision(10);
  for (const auto& p : curve.points) out << p.threshold << ',' << p.far << ',' << p.vr << '\n';
  require(out.good(), Errc::IoError, "write failed: " + path.string());
}

void write_roc_svg(const std::filesystem::path& path, const RocCurve& curve) {
  constexpr double W = 480, H = 360, pad = 40, lo = -6.0;
  std::ostringstream pts;
  for (const auto& p : curve.points) {
    if (p.far <= 0.0) continue;
    const double lx = std::max(std::log10(p.far), lo);
    const double x = pad + (lx - lo) / -lo * (W - 2 * pad);
    const double y = H - pad - p.vr * (H - 2 * pad);
    pts << x << ',' << y << ' ';
  }
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open for writing: " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n"
      << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad
      << "\" height=\"" << H - 2 * pad << "\" fill=\"none\" stroke=\"#888\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"" << H - 8
      << "\" text-anchor=\"middle\" font-size=\"12\">log10 FAR</text>\n"
      << "<text x=\"12\" y=\"" << H / 2 << "\" font-size=\"12\">VR</text>\n"
      << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"" << pts.str()
      << "\"/>\n</svg>\n";
  require(out.good(), Errc::IoError, "write failed: " + path.string());
}

}  // namespace lbl
