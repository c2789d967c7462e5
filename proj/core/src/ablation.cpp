#include "lbl/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "lbl/pipeline.hpp"
#include "lbl/rng.hpp"

namespace lbl {

AblationConfig default_ablation_config() {
  AblationConfig cfg;
  cfg.thick_spec.n_classes = 500;
  cfg.thick_spec.class_offset = 0;
  cfg.train_spec.n_classes = 5000;
  cfg.train_spec.class_offset = 1'000'000;
  cfg.test_spec.n_classes = 500;
  cfg.test_spec.class_offset = 2'000'000;
  for (GenSpec* s : {&cfg.thick_spec, &cfg.train_spec, &cfg.test_spec}) {
    s->family_size = 8;
    s->family_spread = 0.3;
    s->spot_nuisance = 2.0;
    s->wild_nuisance = 2.0;
  }
  return cfg;
}

AblationData make_ablation_data(const AblationConfig& cfg, std::uint64_t seed) {
  const std::uint64_t world = mix_seed(cfg.train_spec.world_seed, seed);
  auto with = [&](GenSpec s, std::uint64_t tag) {
    s.world_seed = world;
    s.seed = mix_seed(seed, tag);
    return s;
  };
  AblationData d;
  d.thick = generate_wild(with(cfg.thick_spec, 1), cfg.thick_samples);
  d.train = generate(with(cfg.train_spec, 2));
  d.test = generate(with(cfg.test_spec, 3));
  return d;
}

// ---------------------------------------------------------------------------

std::vector<double> AblationTable::values(const std::string& suite, const std::string& arm) const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.suite == suite && r.arm == arm) v.push_back(r.vr);
  return v;
}

const AblationRow* AblationTable::find(const std::string& suite, const std::string& arm,
                                       std::uint64_t seed) const {
  for (const auto& r : rows)
    if (r.suite == suite && r.arm == arm && r.seed == seed) return &r;
  return nullptr;
}

double AblationTable::median(const std::string& suite, const std::string& arm) const {
  auto v = values(suite, arm);
  require(!v.empty(), Errc::InvalidArgument, "no rows for " + suite + "/" + arm);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::string> AblationTable::arms(const std::string& suite) const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (r.suite == suite && std::find(out.begin(), out.end(), r.arm) == out.end())
      out.push_back(r.arm);
  return out;
}

std::string AblationTable::csv() const {
  std::ostringstream os;
  os << "suite,arm,seed,vr,achieved_far,threshold,not_converged,final_loss,selected_per_iter,"
        "rows_synced_per_iter,ce_start,ce_end\n"
     << std::setprecision(10);
  for (const auto& r : rows)
    os << r.suite << ',' << r.arm << ',' << r.seed << ',' << r.vr << ',' << r.achieved_far << ','
       << r.threshold << ',' << (r.not_converged ? 1 : 0) << ',' << r.final_loss << ','
       << r.selected_per_iter << ',' << r.rows_synced_per_iter << ',' << r.ce_start << ','
       << r.ce_end << '\n';
  return os.str();
}

void AblationTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open for writing: " + path.string());
  out << csv();
  require(out.good(), Errc::IoError, "write failed: " + path.string());
}

void AblationTable::write_summary_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open for writing: " + path.string());
  out << "suite,arm,median_vr,seeds\n" << std::setprecision(10);
  std::vector<std::string> suites;
  for (const auto& r : rows)
    if (std::find(suites.begin(), suites.end(), r.suite) == suites.end()) suites.push_back(r.suite);
  for (const auto& s : suites)
    for (const auto& a : arms(s)) out << s << ',' << a << ',' << median(s, a) << ','
                                      << values(s, a).size() << '\n';
  require(out.good(), Errc::IoError, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& ablation_suites() {
  static const std::vector<std::string> names = {
      "cvc",         "prototype_mode", "niter_sweep",  "queue_sweep",
      "loss_sweep",  "identity_volume", "selection_cost", "queue_update"};
  return names;
}

namespace {

CvcPlan with_pattern(CvcPlan p, const std::string& pattern) {
  p.stage1.skip = pattern[0] == '#';
  p.stage2.skip = pattern[1] == '#';
  p.stage3.skip = pattern[2] == '#';
  return p;
}

std::size_t pct(std::size_t n, double f) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(n))));
}

}  // namespace

std::vector<ArmSpec> suite_arms(const std::string& suite, const CvcPlan& base,
                                std::size_t n_classes) {
  std::vector<ArmSpec> arms;
  if (suite == "cvc") {
    for (const char* p : {"C##", "CV#", "CVC", "##C", "#V#", "C#C"})
      arms.push_back({p, with_pattern(base, p)});
  } else if (suite == "prototype_mode") {
    for (auto m : {PrototypeMode::Id, PrototypeMode::Avg}) {
      CvcPlan p = with_pattern(base, "CVC");
      p.stage3.prototype_mode = m;
      arms.push_back({"softmax(" + to_string(m) + ")", p});
    }
  } else if (suite == "niter_sweep") {
    for (double f : {0.02, 0.05, 0.10}) {
      CvcPlan p = with_pattern(base, "CVC");
      p.stage3.selection = SelectionKind::Random;
      p.stage3.n_iter = std::max<std::size_t>(pct(n_classes, f), base.batch_classes);
      arms.push_back({"RP(" + std::to_string(p.stage3.n_iter) + ")", p});
    }
  } else if (suite == "queue_sweep") {
    for (std::size_t q : {5, 10, 25, 50}) {
      CvcPlan p = with_pattern(base, "CVC");
      p.stage3.selection = SelectionKind::Dominant;
      p.stage3.q = q;
      p.stage3.c = std::min<std::size_t>(3 * q, n_classes - 1);
      p.stage3.n_iter = std::min<std::size_t>(
          n_classes, std::max<std::size_t>(base.stage3.n_iter, base.batch_classes * (q + 1)));
      arms.push_back({"DP_" + std::to_string(q) + "(" + std::to_string(p.stage3.n_iter) + ")", p});
    }
  } else if (suite == "loss_sweep") {
    for (auto k : {ClsLossKind::Softmax, ClsLossKind::Angular, ClsLossKind::Additive}) {
      CvcPlan p = with_pattern(base, "CVC");
      p.stage3.loss = k;
      arms.push_back({to_string(k), p});
    }
  } else if (suite == "identity_volume") {
    for (double f : {0.10, 0.50, 1.00}) {
      CvcPlan p = with_pattern(base, "CVC");
      arms.push_back({"ids_" + std::to_string(static_cast<int>(std::lround(f * 100))) + "pct", p, f});
    }
  } else if (suite == "selection_cost") {
    CvcPlan dp = with_pattern(base, "CVC");
    dp.stage3.selection = SelectionKind::Dominant;
    arms.push_back({"DP_" + std::to_string(dp.stage3.q) + "(" + std::to_string(dp.stage3.n_iter) +
                        ")",
                    dp});
    CvcPlan rp = dp;
    rp.stage3.selection = SelectionKind::Random;
    rp.stage3.n_iter = std::min<std::size_t>(n_classes, 4 * dp.stage3.n_iter);
    arms.push_back({"RP(" + std::to_string(rp.stage3.n_iter) + ")", rp});
  } else if (suite == "queue_update") {
    for (bool on : {true, false}) {
      CvcPlan p = with_pattern(base, "CVC");
      p.stage3.selection = SelectionKind::Dominant;
      p.stage3.queue_update = on;
      arms.push_back({on ? "update_on" : "update_off", p});
    }
  } else {
    fail(Errc::InvalidArgument, "unknown ablation suite '" + suite + "'");
  }
  return arms;
}

namespace {

struct StageResult {
  EncoderParams encoder;
  RunRecord record;
};

std::string plan_key(const CvcPlan& plan, std::initializer_list<const char*> prefixes) {
  std::string key;
  for (const auto& k : CvcPlan::keys())
    for (const char* p : prefixes)
      if (k.rfind(p, 0) == 0) key += k + "=" + plan.get(k) + ";";
  return key;
}

/// Memoized per-seed trainer: each stage's output is cached by the plan keys
/// it depends on and the training subset.
class SeedRunner {
 public:
  SeedRunner(const AblationData& data) : data_(data) {}

  const StageResult& stage1(const CvcPlan& plan) {
    const std::string key = plan_key(plan, {"run.", "model.", "stage1."});
    if (auto it = s1_.find(key); it != s1_.end()) return it->second;
    CvcPlan p = plan;
    p.stage2.skip = p.stage3.skip = true;
    StageResult r;
    r.record = run_plan(p, &data_.thick, data_.train, &r.encoder);
    return s1_.emplace(key, std::move(r)).first->second;
  }

  const StageResult& stage2(const CvcPlan& plan, std::size_t n_train) {
    const std::string key = plan_key(plan, {"run.", "model.", "stage1.", "stage2."}) +
                            "n=" + std::to_string(n_train);
    if (auto it = s2_.find(key); it != s2_.end()) return it->second;
    const StageResult& prev = stage1(plan);
    StageResult r;
    if (plan.stage2.skip) {
      r = prev;
    } else {
      CvcPlan p = plan;
      p.stage1.skip = p.stage3.skip = true;
      const BisampleDataset& train = subset(n_train);
      CvcTrainer t(p, nullptr, train);
      t.set_encoder(prev.encoder);
      t.run();
      r.encoder = t.encoder();
      r.record = t.record();
    }
    return s2_.emplace(key, std::move(r)).first->second;
  }

  const StageResult& stage3(const CvcPlan& plan, std::size_t n_train) {
    const std::string key = plan_key(plan, {"run.", "model.", "stage1.", "stage2.", "stage3."}) +
                            "n=" + std::to_string(n_train);
    if (auto it = s3_.find(key); it != s3_.end()) return it->second;
    const StageResult& prev = stage2(plan, n_train);
    StageResult r;
    if (plan.stage3.skip) {
      r = prev;
    } else {
      CvcPlan p = plan;
      p.stage1.skip = p.stage2.skip = true;
      const BisampleDataset& train = subset(n_train);
      CvcTrainer t(p, nullptr, train);
      t.set_encoder(prev.encoder);
      t.run();
      r.encoder = t.encoder();
      r.record = t.record();
    }
    return s3_.emplace(key, std::move(r)).first->second;
  }

 private:
  const BisampleDataset& subset(std::size_t n) {
    if (n == data_.train.n_classes()) return data_.train;
    auto it = subsets_.find(n);
    if (it == subsets_.end()) it = subsets_.emplace(n, data_.train.head(n)).first;
    return it->second;
  }

  const AblationData& data_;
  std::map<std::size_t, BisampleDataset> subsets_;
  std::map<std::string, StageResult> s1_, s2_, s3_;
};

/// Summary of the last stage that actually trained.
const StageSummary* last_trained(const RunRecord& rec) {
  const StageSummary* out = nullptr;
  for (const auto& s : rec.stages)
    if (!s.skipped) out = &s;
  return out;
}

}  // namespace

AblationTable run_ablations(std::span<const std::string> suites, const AblationConfig& cfg,
                            const AblationProgress& progress) {
  for (const auto& s : suites)
    require(std::find(ablation_suites().begin(), ablation_suites().end(), s) !=
                ablation_suites().end(),
            Errc::InvalidArgument, "unknown ablation suite '" + s + "'");
  cfg.base.validate();

  AblationTable table;
  for (std::uint64_t seed : cfg.seeds) {
    const AblationData data = make_ablation_data(cfg, seed);
    SeedRunner runner(data);
    for (const auto& suite : suites) {
      CvcPlan base = cfg.base;
      base.seed = seed;
      for (const ArmSpec& arm : suite_arms(suite, base, data.train.n_classes())) {
        const std::size_t n_train =
            std::max<std::size_t>(arm.plan.batch_classes, static_cast<std::size_t>(std::llround(
                                      arm.train_fraction * data.train.n_classes())));
        const StageResult& res = runner.stage3(arm.plan, n_train);
        const double far = cfg.far;
        const FarPoint fp = evaluate(res.encoder, data.test, std::span<const double>(&far, 1))[0];

        AblationRow row;
        row.suite = suite;
        row.arm = arm.name;
        row.seed = seed;
        row.vr = fp.vr;
        row.achieved_far = fp.achieved_far;
        row.threshold = fp.threshold;
        if (const StageSummary* s = last_trained(res.record)) {
          row.not_converged = s->not_converged;
          row.final_loss = s->last_window_loss;
        }
        row.selected_per_iter = res.record.mean_selected(3);
        row.rows_synced_per_iter = res.record.mean_rows_synced(3);
        row.ce_start = res.record.ce_start;
        row.ce_end = res.record.ce_end;
        table.rows.push_back(row);
        if (progress) progress(row);
      }
    }
  }
  return table;
}

AblationTable run_ablation(const std::string& suite, const AblationConfig& cfg,
                           const AblationProgress& progress) {
  return run_ablations(std::span<const std::string>(&suite, 1), cfg, progress);
}

}  // namespace lbl
