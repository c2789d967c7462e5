#include "lbl/diagnose.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>

#include "lbl/ver_loss.hpp"

namespace lbl {

BatchPlan replay_batch(std::size_t n_classes, const ReplayConfig& cfg, std::size_t b) {
  Rng rng = Rng::stream(cfg.seed, Stream::Eval, b);
  return build_npairs_batch(static_cast<std::uint32_t>(n_classes),
                            std::min(cfg.batch_classes, n_classes), rng);
}

Matrix full_probs(const Matrix& features, const Matrix& prototypes, double scale) {
  Matrix p = matmul_bt(features, prototypes);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    for (double& v : row) v *= scale;
    stable_softmax_inplace(row);
  }
  return p;
}

namespace {

Matrix batch_inputs(const BisampleDataset& data, const BatchPlan& plan) {
  Matrix x(plan.labels.size(), data.input_dim());
  for (std::size_t r = 0; r < plan.labels.size(); ++r) {
    const Matrix& src = plan.kinds[r] == SampleKind::Id ? data.id_inputs : data.spot_inputs;
    std::ranges::copy(src.row(plan.labels[r]), x.row(r).begin());
  }
  return x;
}

void check_dims(const EncoderParams& params, const PrototypeStore& store,
                const BisampleDataset& data) {
  require(params.input_dim() == data.input_dim(), Errc::ShapeError,
          "encoder input dim does not match dataset");
  require(params.output_dim() == store.dim(), Errc::ShapeError,
          "encoder output dim does not match prototypes");
  require(store.num_classes() == data.n_classes(), Errc::ShapeError,
          "prototype count does not match dataset classes");
}

}  // namespace

std::vector<double> replay_ce(const EncoderParams& params, const PrototypeStore& store,
                              const BisampleDataset& data, std::span<const std::size_t> ks,
                              const ReplayConfig& cfg) {
  return diagnose(params, store, nullptr, data, ks, cfg).ce;
}

std::vector<std::size_t> k_grid(std::size_t n_classes) {
  std::vector<std::size_t> ks = {1};
  for (double f : {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0})
    ks.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(f * n_classes)));
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

DiagnoseReport diagnose(const EncoderParams& params, const PrototypeStore& store,
                        const DominantQueues* queues, const BisampleDataset& data,
                        std::span<const std::size_t> ks, const ReplayConfig& cfg) {
  check_dims(params, store, data);
  require(cfg.batches > 0, Errc::InvalidArgument, "replay needs at least one batch");
  if (queues)
    require(queues->num_classes() == store.num_classes(), Errc::ShapeError,
            "queue count does not match prototypes");

  DiagnoseReport rep;
  rep.ks.assign(ks.begin(), ks.end());
  rep.ce.assign(ks.size(), 0.0);
  rep.has_queues = queues != nullptr;
  std::optional<DominantQueues> scratch;
  if (queues) scratch = *queues;

  std::vector<std::uint32_t> all(store.num_classes());
  std::iota(all.begin(), all.end(), 0u);
  for (std::size_t b = 0; b < cfg.batches; ++b) {
    const BatchPlan plan = replay_batch(data.n_classes(), cfg, b);
    const Matrix f = encode(params, batch_inputs(data, plan));
    const Matrix p = full_probs(f, store.matrix(), cfg.scale);
    const EnergyReport e = energy_report(p, all, plan.labels, ks);
    for (std::size_t i = 0; i < ks.size(); ++i) rep.ce[i] += e.ce[i];
    if (scratch) rep.cases.add(update_queues(plan.labels, p, all, *scratch));
  }
  for (double& c : rep.ce) c /= static_cast<double>(cfg.batches);
  return rep;
}

void write_ce_csv(const std::filesystem::path& path, const DiagnoseReport& report) {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open for writing: " + path.string());
  out << "k,ce\n" << std::setprecision(12);
  for (std::size_t i = 0; i < report.ks.size(); ++i)
    out << report.ks[i] << ',' << report.ce[i] << '\n';
  require(out.good(), Errc::IoError, "write failed: " + path.string());
}

void write_cases_csv(const std::filesystem::path& path, const DiagnoseReport& report) {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open for writing: " + path.string());
  out << "case,count\n"
      << "correct," << report.cases.correct << '\n'
      << "in_queue," << report.cases.in_queue << '\n'
      << "promote," << report.cases.promote << '\n'
      << "reject_noisy," << report.cases.reject_noisy << '\n';
  require(out.good(), Errc::IoError, "write failed: " + path.string());
}

}  // namespace lbl
