#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lbl/ablation.hpp"
#include "lbl/diagnose.hpp"
#include "lbl/error.hpp"
#include "lbl/eval.hpp"
#include "lbl/pipeline.hpp"
#include "lbl/plan.hpp"

#ifndef LBL_VERSION
#define LBL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace lbl;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kDiverged = 3, kIo = 4 };

// ---------------------------------------------------------------------------
// Logging: one `event key=value ...` line per record, or aligned text with --pretty.

class Log {
 public:
  explicit Log(bool pretty) : pretty_(pretty) {}

  void operator()(const std::string& event,
                  const std::vector<std::pair<std::string, std::string>>& kv) const {
    std::ostringstream os;
    if (pretty_) {
      os << std::left << std::setw(10) << event;
      for (const auto& [k, v] : kv) os << "  " << k << ": " << v;
    } else {
      os << "event=" << event;
      for (const auto& [k, v] : kv) os << ' ' << k << '=' << quote(v);
    }
    std::cout << os.str() << std::endl;
  }

 private:
  static std::string quote(const std::string& v) {
    if (v.find_first_of(" \t\"=") == std::string::npos && !v.empty()) return v;
    std::string out = "\"";
    for (char c : v) out += c == '"' ? std::string("\\\"") : std::string(1, c);
    return out + '"';
  }
  bool pretty_;
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Settings outside the training plan: data generation, ablation, evaluation
// and diagnostics. Same sectioned text format as the plan.

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(Errc::ConfigError, "invalid value '" + value + "' for key '" + key + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

std::uint32_t to_u32(const std::string& key, const std::string& v) {
  const std::uint64_t x = to_u64(key, v);
  if (x > 0xffffffffull) bad_value(key, v);
  return static_cast<std::uint32_t>(x);
}

double to_f64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
  if (used != v.size()) bad_value(key, v);
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string f64_text(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Settings {
  CvcPlan plan;
  AblationConfig data = default_ablation_config();
  std::vector<std::string> suites = {"cvc"};
  std::string eval_model;
  std::string diag_model;
  std::string diag_prototypes;
  std::string diag_queues = "auto";
  std::uint64_t diag_batches = 8;
  double diag_scale = 16.0;

  using Getter = std::function<std::string(const Settings&)>;
  using Setter = std::function<void(Settings&, const std::string&, const std::string&)>;
  struct Field {
    Getter get;
    Setter set;
  };

  static const std::vector<std::pair<std::string, Field>>& fields() {
    static const auto table = build();
    return table;
  }

  void set(const std::string& key, const std::string& value) {
    if (key.rfind("tool.", 0) == 0) return;  // manifest header, informational
    for (const auto& [k, f] : fields())
      if (k == key) return f.set(*this, key, value);
    plan.set(key, value);
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "[tool]\nversion = " << LBL_VERSION << "\n\n" << plan.to_text();
    std::string section;
    for (const auto& [key, f] : fields()) {
      const auto dot = key.find('.');
      const std::string sec = key.substr(0, dot);
      if (sec != section) {
        os << "\n[" << sec << "]\n";
        section = sec;
      }
      os << key.substr(dot + 1) << " = " << f.get(*this) << '\n';
    }
    return os.str();
  }

 private:
  // Applies to every split of the synthetic world.
  template <class T>
  static Field shared(T GenSpec::*member) {
    return {[member](const Settings& s) {
              if constexpr (std::is_floating_point_v<T>)
                return f64_text(s.data.train_spec.*member);
              else
                return std::to_string(s.data.train_spec.*member);
            },
            [member](Settings& s, const std::string& k, const std::string& v) {
              T x{};
              if constexpr (std::is_floating_point_v<T>)
                x = to_f64(k, v);
              else if constexpr (sizeof(T) == 4)
                x = to_u32(k, v);
              else
                x = to_u64(k, v);
              s.data.thick_spec.*member = x;
              s.data.train_spec.*member = x;
              s.data.test_spec.*member = x;
            }};
  }

  static Field classes(GenSpec AblationConfig::*split) {
    return {[split](const Settings& s) { return std::to_string((s.data.*split).n_classes); },
            [split](Settings& s, const std::string& k, const std::string& v) {
              (s.data.*split).n_classes = to_u32(k, v);
            }};
  }

  static Field path(std::string Settings::*member) {
    return {[member](const Settings& s) { return s.*member; },
            [member](Settings& s, const std::string&, const std::string& v) { s.*member = v; }};
  }

  static std::vector<std::pair<std::string, Field>> build() {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("gen.thick_classes", classes(&AblationConfig::thick_spec));
    t.emplace_back("gen.thick_samples",
                   Field{[](const Settings& s) { return std::to_string(s.data.thick_samples); },
                         [](Settings& s, const std::string& k, const std::string& v) {
                           s.data.thick_samples = to_u32(k, v);
                         }});
    t.emplace_back("gen.train_classes", classes(&AblationConfig::train_spec));
    t.emplace_back("gen.test_classes", classes(&AblationConfig::test_spec));
    t.emplace_back("gen.input_dim", shared(&GenSpec::input_dim));
    t.emplace_back("gen.latent_dim", shared(&GenSpec::latent_dim));
    t.emplace_back("gen.id_noise", shared(&GenSpec::id_noise_sigma));
    t.emplace_back("gen.spot_noise", shared(&GenSpec::spot_noise_sigma));
    t.emplace_back("gen.shift", shared(&GenSpec::heterogeneity_shift));
    t.emplace_back("gen.mislabel", shared(&GenSpec::mislabel_rate));
    t.emplace_back("gen.low_quality", shared(&GenSpec::low_quality_rate));
    t.emplace_back("gen.world_seed", shared(&GenSpec::world_seed));
    t.emplace_back("gen.nuisance_dim", shared(&GenSpec::nuisance_dim));
    t.emplace_back("gen.spot_nuisance", shared(&GenSpec::spot_nuisance));
    t.emplace_back("gen.wild_nuisance", shared(&GenSpec::wild_nuisance));
    t.emplace_back("gen.wild_noise", shared(&GenSpec::wild_noise_sigma));
    t.emplace_back("gen.wild_overlap", shared(&GenSpec::wild_overlap));
    t.emplace_back("gen.low_quality_noise", shared(&GenSpec::low_quality_sigma));
    t.emplace_back("gen.family_size", shared(&GenSpec::family_size));
    t.emplace_back("gen.family_spread", shared(&GenSpec::family_spread));

    t.emplace_back("ablate.suites",
                   Field{[](const Settings& s) {
                           std::string out;
                           for (const auto& x : s.suites) out += (out.empty() ? "" : ",") + x;
                           return out;
                         },
                         [](Settings& s, const std::string& k, const std::string& v) {
                           s.suites = split_list(v);
                           if (s.suites.size() == 1 && s.suites[0] == "all")
                             s.suites = ablation_suites();
                           if (s.suites.empty()) bad_value(k, v);
                         }});
    t.emplace_back("ablate.seeds",
                   Field{[](const Settings& s) {
                           std::string out;
                           for (auto x : s.data.seeds)
                             out += (out.empty() ? "" : ",") + std::to_string(x);
                           return out;
                         },
                         [](Settings& s, const std::string& k, const std::string& v) {
                           s.data.seeds.clear();
                           for (const auto& x : split_list(v)) s.data.seeds.push_back(to_u64(k, x));
                           if (s.data.seeds.empty()) bad_value(k, v);
                         }});
    t.emplace_back("ablate.far",
                   Field{[](const Settings& s) { return f64_text(s.data.far); },
                         [](Settings& s, const std::string& k, const std::string& v) {
                           s.data.far = to_f64(k, v);
                           if (!(s.data.far > 0.0 && s.data.far < 1.0)) bad_value(k, v);
                         }});

    t.emplace_back("eval.model", path(&Settings::eval_model));

    t.emplace_back("diagnose.model", path(&Settings::diag_model));
    t.emplace_back("diagnose.prototypes", path(&Settings::diag_prototypes));
    t.emplace_back("diagnose.queues", path(&Settings::diag_queues));
    t.emplace_back("diagnose.batches",
                   Field{[](const Settings& s) { return std::to_string(s.diag_batches); },
                         [](Settings& s, const std::string& k, const std::string& v) {
                           s.diag_batches = to_u64(k, v);
                           if (s.diag_batches == 0) bad_value(k, v);
                         }});
    t.emplace_back("diagnose.scale",
                   Field{[](const Settings& s) { return f64_text(s.diag_scale); },
                         [](Settings& s, const std::string& k, const std::string& v) {
                           s.diag_scale = to_f64(k, v);
                           if (!(s.diag_scale > 0.0)) bad_value(k, v);
                         }});
    return t;
  }
};

// ---------------------------------------------------------------------------

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::int64_t seed = -1;
  bool pretty = false;
};

struct Context {
  Settings s;
  fs::path out;
  Log log{false};
};

Context resolve(const Common& c, const std::string& verb) {
  Context ctx;
  ctx.log = Log(c.pretty);
  if (!c.config.empty())
    for (const auto& [k, v] : parse_sections(read_text_file(c.config))) ctx.s.set(k, v);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, Errc::ConfigError,
            "--set expects section.key=value, got '" + kv + "'");
    ctx.s.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed >= 0) ctx.s.plan.seed = static_cast<std::uint64_t>(c.seed);
  ctx.s.plan.validate();
  for (const GenSpec* g : {&ctx.s.data.thick_spec, &ctx.s.data.train_spec, &ctx.s.data.test_spec})
    g->validate();

  std::string out = "lbl_out";
  if (const char* env = std::getenv("LBL_OUT_DIR"); env && *env) out = env;
  if (!c.out.empty()) out = c.out;
  ctx.out = out;

  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  require(!ec && fs::is_directory(ctx.out), Errc::IoError,
          "cannot create output directory " + ctx.out.string() + ": " + ec.message());

  // The manifest is written before any heavy work and is itself a valid config.
  const fs::path manifest = ctx.out / "manifest.txt";
  {
    std::ofstream f(manifest);
    require(f.good(), Errc::IoError, "cannot write " + manifest.string());
    f << "# lbl " << verb << "\n" << ctx.s.to_text();
    require(f.good(), Errc::IoError, "write failed: " + manifest.string());
  }
  ctx.log("manifest", {{"verb", verb},
                       {"version", LBL_VERSION},
                       {"seed", std::to_string(ctx.s.plan.seed)},
                       {"path", manifest.string()}});
  return ctx;
}

std::string data_path(const std::string& configured, const fs::path& out, const char* name) {
  return configured.empty() ? (out / name).string() : configured;
}

void require_file(const fs::path& p, const std::string& what) {
  require(fs::is_regular_file(p), Errc::IoError, what + " not found: " + p.string());
}

// ---------------------------------------------------------------------------

int cmd_gen(const Context& ctx) {
  const AblationData d = make_ablation_data(ctx.s.data, ctx.s.plan.seed);
  save_multisample(ctx.out / "thick.lblt", d.thick);
  save_bisample(ctx.out / "train.lbld", d.train);
  save_bisample(ctx.out / "test.lbld", d.test);
  save_flags(ctx.out / "train.flags.csv", d.train);
  save_flags(ctx.out / "test.flags.csv", d.test);
  ctx.log("gen", {{"thick_classes", std::to_string(d.thick.n_classes())},
                  {"train_classes", std::to_string(d.train.n_classes())},
                  {"test_classes", std::to_string(d.test.n_classes())},
                  {"out", ctx.out.string()}});
  return kOk;
}

void report_far(const Context& ctx, const std::vector<FarPoint>& points) {
  for (const FarPoint& p : points)
    ctx.log("far", {{"target", num(p.far_target)},
                    {"achieved", num(p.achieved_far)},
                    {"threshold", num(p.threshold)},
                    {"vr", num(p.vr)}});
}

int cmd_train(const Context& ctx, const std::string& resume, std::uint64_t max_steps) {
  const CvcPlan& plan = ctx.s.plan;
  const std::string train_path = data_path(plan.train_path, ctx.out, "train.lbld");
  const std::string thick_path = data_path(plan.thick_path, ctx.out, "thick.lblt");
  require_file(train_path, "training set");
  const BisampleDataset train = load_bisample(train_path);
  MultiSampleDataset thick;
  if (!plan.stage1.skip) {
    require_file(thick_path, "thick set");
    thick = load_multisample(thick_path);
  }
  const MultiSampleDataset* thick_ptr = plan.stage1.skip ? nullptr : &thick;

  TrainerOptions opts;
  opts.out_dir = ctx.out;
  CvcTrainer trainer = resume.empty()
                           ? CvcTrainer(plan, thick_ptr, train, opts)
                           : CvcTrainer::resume(resume, plan, thick_ptr, train, opts);
  if (!resume.empty())
    ctx.log("resume", {{"from", resume}, {"iteration", std::to_string(trainer.global_iteration())}});

  // Progress once per scheduler window.
  const std::uint64_t chunk = std::max<std::uint64_t>(1, plan.lr_window);
  std::uint64_t budget = max_steps;
  while (!trainer.finished() && budget > 0) {
    const std::uint64_t before = trainer.global_iteration();
    trainer.run(std::min(chunk, budget));
    const std::uint64_t done = trainer.global_iteration() - before;
    budget -= std::min(budget, done);
    const auto& rows = trainer.record().rows;
    if (done > 0 && !rows.empty()) {
      double sum = 0.0;
      for (std::size_t i = rows.size() - done; i < rows.size(); ++i) sum += rows[i].loss;
      ctx.log("progress", {{"stage", std::to_string(rows.back().stage)},
                           {"iteration", std::to_string(rows.back().iteration)},
                           {"loss", num(sum / static_cast<double>(done))},
                           {"lr", num(rows.back().lr)}});
    }
  }

  const RunRecord& rec = trainer.record();
  rec.write_csv(ctx.out / "run.csv");
  if (!trainer.finished()) {
    trainer.save_state(ctx.out / "state.lbls");
    ctx.log("paused", {{"iteration", std::to_string(trainer.global_iteration())},
                       {"state", (ctx.out / "state.lbls").string()}});
    return kOk;
  }

  for (const StageSummary& st : rec.stages)
    ctx.log("stage", {{"stage", std::to_string(st.stage)},
                      {"skipped", st.skipped ? "true" : "false"},
                      {"iterations", std::to_string(st.iterations)},
                      {"first_loss", num(st.first_window_loss)},
                      {"last_loss", num(st.last_window_loss)},
                      {"not_converged", st.not_converged ? "true" : "false"}});
  if (rec.ce_k > 0)
    ctx.log("energy", {{"k", std::to_string(rec.ce_k)},
                       {"ce_start", num(rec.ce_start)},
                       {"ce_end", num(rec.ce_end)}});

  save_encoder(ctx.out / "final.lblm", trainer.encoder());
  const std::string test_path = data_path(plan.test_path, ctx.out, "test.lbld");
  if (fs::is_regular_file(test_path)) {
    const BisampleDataset test = load_bisample(test_path);
    // Training reports only the targets the test set can resolve.
    const double impostors = static_cast<double>(make_test_pairs(test).impostor_count());
    std::vector<double> targets;
    for (double t : plan.far_targets) {
      if (std::floor(t * impostors + 1e-9) >= 1.0) {
        targets.push_back(t);
      } else {
        ctx.log("far_skipped", {{"target", num(t)}, {"impostors", num(impostors)}});
      }
    }
    const auto points = evaluate(trainer.encoder(), test, targets);
    write_far_csv(ctx.out / "far.csv", points);
    report_far(ctx, points);
  }
  ctx.log("done", {{"checksum", hex(rec.checksum())}, {"model", (ctx.out / "final.lblm").string()}});
  return kOk;
}

int cmd_eval(const Context& ctx) {
  const std::string model = data_path(ctx.s.eval_model, ctx.out, "final.lblm");
  const std::string test_path = data_path(ctx.s.plan.test_path, ctx.out, "test.lbld");
  require_file(model, "model");
  require_file(test_path, "test set");
  const EncoderParams params = load_encoder(model);
  const BisampleDataset test = load_bisample(test_path);
  const ScoreSet scores = score_pairs(params, test, make_test_pairs(test));
  const auto points = vr_at_far(scores, ctx.s.plan.far_targets);
  const RocCurve curve = roc(scores);
  write_far_csv(ctx.out / "far.csv", points);
  write_roc_csv(ctx.out / "roc.csv", curve);
  write_roc_svg(ctx.out / "roc.svg", curve);
  report_far(ctx, points);
  return kOk;
}

int cmd_ablate(const Context& ctx) {
  AblationConfig cfg = ctx.s.data;
  cfg.base = ctx.s.plan;
  const AblationTable table = run_ablations(ctx.s.suites, cfg, [&](const AblationRow& r) {
    ctx.log("arm", {{"suite", r.suite},
                    {"arm", r.arm},
                    {"seed", std::to_string(r.seed)},
                    {"vr", num(r.vr)},
                    {"not_converged", r.not_converged ? "true" : "false"},
                    {"rows_synced", num(r.rows_synced_per_iter)}});
  });
  table.write_csv(ctx.out / "ablation.csv");
  table.write_summary_csv(ctx.out / "summary.csv");
  for (const auto& suite : ctx.s.suites)
    for (const auto& arm : table.arms(suite))
      ctx.log("median", {{"suite", suite}, {"arm", arm}, {"vr", num(table.median(suite, arm))}});
  return kOk;
}

int cmd_diagnose(const Context& ctx) {
  const std::string model = data_path(ctx.s.diag_model, ctx.out, "final.lblm");
  const std::string protos = data_path(ctx.s.diag_prototypes, ctx.out, "prototypes.lblp");
  const std::string train_path = data_path(ctx.s.plan.train_path, ctx.out, "train.lbld");
  require_file(model, "model");
  require_file(protos, "prototypes");
  require_file(train_path, "training set");

  std::string queues_path = ctx.s.diag_queues;
  if (queues_path == "auto") {
    const fs::path guess = ctx.out / "queues.lblq";
    queues_path = fs::is_regular_file(guess) ? guess.string() : "";
  } else if (!queues_path.empty()) {
    require_file(queues_path, "queues");
  }

  const EncoderParams params = load_encoder(model);
  const PrototypeStore store = load_prototypes(protos);
  const BisampleDataset train = load_bisample(train_path);
  std::optional<DominantQueues> queues;
  if (!queues_path.empty()) queues = load_queues(queues_path);

  ReplayConfig rc;
  rc.seed = ctx.s.plan.seed;
  rc.batch_classes = ctx.s.plan.batch_classes;
  rc.batches = ctx.s.diag_batches;
  rc.scale = ctx.s.diag_scale;
  const auto ks = k_grid(store.num_classes());
  const DiagnoseReport rep =
      diagnose(params, store, queues ? &*queues : nullptr, train, ks, rc);
  write_ce_csv(ctx.out / "ce.csv", rep);
  for (std::size_t i = 0; i < rep.ks.size(); ++i)
    ctx.log("ce", {{"k", std::to_string(rep.ks[i])}, {"ce", num(rep.ce[i])}});
  if (rep.has_queues) {
    write_cases_csv(ctx.out / "cases.csv", rep);
    ctx.log("cases", {{"correct", std::to_string(rep.cases.correct)},
                      {"in_queue", std::to_string(rep.cases.in_queue)},
                      {"promote", std::to_string(rep.cases.promote)},
                      {"reject_noisy", std::to_string(rep.cases.reject_noisy)}});
  }
  return kOk;
}

int exit_code(Errc e) {
  switch (e) {
    case Errc::ConfigError:
    case Errc::InvalidArgument:
    case Errc::ResolutionError:
    case Errc::ShapeError:
      return kConfig;
    case Errc::StageDiverged:
    case Errc::NonFinite:
      return kDiverged;
    case Errc::IoError:
    case Errc::FormatError:
      return kIo;
    default:
      return kInternal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lbl: large-scale bisample metric learning"};
  app.set_version_flag("--version", std::string(LBL_VERSION));
  app.require_subcommand(1);

  Common common;
  std::string resume;
  std::uint64_t max_steps = std::numeric_limits<std::uint64_t>::max();

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "Config file (sectioned key = value)");
    sub->add_option("-s,--set", common.sets, "Override one key: section.key=value");
    sub->add_option("-o,--out", common.out, "Output directory (default $LBL_OUT_DIR or lbl_out)");
    sub->add_option("--seed", common.seed, "Global seed (run.seed)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--pretty", common.pretty, "Human-readable log lines");
  };

  auto* gen = app.add_subcommand("gen", "Generate thick, train and test datasets");
  auto* train = app.add_subcommand("train", "Run the three-stage training plan");
  auto* eval = app.add_subcommand("eval", "VR@FAR and ROC of a model on the test set");
  auto* ablate = app.add_subcommand("ablate", "Run ablation suites over seeds");
  auto* diag = app.add_subcommand("diagnose", "CE_K curve and queue-update histogram");
  for (auto* sub : {gen, train, eval, ablate, diag}) add_common(sub);
  train->add_option("--resume", resume, "Continue from a state file");
  train->add_option("--max-steps", max_steps, "Stop after this many iterations and save state");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const Context ctx = resolve(common, sub->get_name());
    if (sub == gen) return cmd_gen(ctx);
    if (sub == train) return cmd_train(ctx, resume, max_steps);
    if (sub == eval) return cmd_eval(ctx);
    if (sub == ablate) return cmd_ablate(ctx);
    return cmd_diagnose(ctx);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
}
