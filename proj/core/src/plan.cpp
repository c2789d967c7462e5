#include "lbl/plan.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

namespace lbl {

std::string to_string(ClsLossKind k) {
  switch (k) {
    case ClsLossKind::Softmax: return "softmax";
    case ClsLossKind::Angular: return "angular";
    case ClsLossKind::Additive: return "additive";
  }
  return "?";
}

std::string to_string(VerLossKind k) {
  return k == VerLossKind::Triplet ? "triplet" : "contrastive";
}

std::string to_string(SelectionKind k) {
  switch (k) {
    case SelectionKind::Random: return "random";
    case SelectionKind::Dominant: return "dominant";
    case SelectionKind::Full: return "full";
  }
  return "?";
}

std::string to_string(PrototypeMode m) { return m == PrototypeMode::Id ? "id" : "avg"; }

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(Errc::ConfigError, "invalid value '" + value + "' for key '" + key + "'");
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v);
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  bad_value(key, v);
}

std::string fmt_f64(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <typename E>
E parse_enum(const std::string& key, const std::string& v,
             std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, e] : options)
    if (v == name) return e;
  bad_value(key, v);
}

ClsLossKind parse_cls(const std::string& k, const std::string& v) {
  return parse_enum<ClsLossKind>(k, v, {{"softmax", ClsLossKind::Softmax},
                                        {"angular", ClsLossKind::Angular},
                                        {"additive", ClsLossKind::Additive}});
}

struct Field {
  std::function<std::string(const CvcPlan&)> get;
  std::function<void(CvcPlan&, const std::string&, const std::string&)> set;
};

#define LBL_U64(path)                                                              \
  Field{[](const CvcPlan& p) { return std::to_string(p.path); },                   \
        [](CvcPlan& p, const std::string& k, const std::string& v) { p.path = parse_u64(k, v); }}
#define LBL_F64(path)                                                              \
  Field{[](const CvcPlan& p) { return fmt_f64(p.path); },                          \
        [](CvcPlan& p, const std::string& k, const std::string& v) { p.path = parse_f64(k, v); }}
#define LBL_BOOL(path)                                                             \
  Field{[](const CvcPlan& p) { return fmt_bool(p.path); },                         \
        [](CvcPlan& p, const std::string& k, const std::string& v) { p.path = parse_bool(k, v); }}
#define LBL_STR(path)                                                              \
  Field{[](const CvcPlan& p) { return p.path; },                                   \
        [](CvcPlan& p, const std::string&, const std::string& v) { p.path = v; }}
#define LBL_INT(path)                                                              \
  Field{[](const CvcPlan& p) { return std::to_string(p.path); },                   \
        [](CvcPlan& p, const std::string& k, const std::string& v) {               \
          p.path = static_cast<int>(parse_u64(k, v));                              \
        }}

const std::vector<std::pair<std::string, Field>>& registry() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"run.seed", LBL_U64(seed)},
      {"run.batch_classes", LBL_U64(batch_classes)},
      {"run.lr_window", LBL_U64(lr_window)},
      {"run.checkpoint_every", LBL_U64(checkpoint_every)},
      {"run.far_targets",
       Field{[](const CvcPlan& p) {
               std::string s;
               for (double f : p.far_targets) s += (s.empty() ? "" : ",") + fmt_f64(f);
               return s;
             },
             [](CvcPlan& p, const std::string& k, const std::string& v) {
               p.far_targets.clear();
               std::stringstream ss(v);
               for (std::string tok; std::getline(ss, tok, ',');)
                 p.far_targets.push_back(parse_f64(k, trim(tok)));
               if (p.far_targets.empty()) bad_value(k, v);
             }}},
      {"model.hidden",
       Field{[](const CvcPlan& p) {
               std::string s;
               for (auto h : p.hidden) s += (s.empty() ? "" : ",") + std::to_string(h);
               return s;
             },
             [](CvcPlan& p, const std::string& k, const std::string& v) {
               p.hidden.clear();
               std::stringstream ss(v);
               for (std::string tok; std::getline(ss, tok, ',');)
                 if (!trim(tok).empty()) p.hidden.push_back(parse_u64(k, trim(tok)));
             }}},
      {"model.dim", LBL_U64(dim)},
      {"data.thick", LBL_STR(thick_path)},
      {"data.train", LBL_STR(train_path)},
      {"data.test", LBL_STR(test_path)},

      {"stage1.skip", LBL_BOOL(stage1.skip)},
      {"stage1.loss",
       Field{[](const CvcPlan& p) { return to_string(p.stage1.loss); },
             [](CvcPlan& p, const std::string& k, const std::string& v) {
               p.stage1.loss = parse_cls(k, v);
             }}},
      {"stage1.iterations", LBL_U64(stage1.iterations)},
      {"stage1.lr", LBL_F64(stage1.lr)},
      {"stage1.momentum", LBL_F64(stage1.momentum)},
      {"stage1.weight_decay", LBL_F64(stage1.weight_decay)},
      {"stage1.head_lr", LBL_F64(stage1.head_lr)},
      {"stage1.scale", LBL_F64(stage1.scale)},
      {"stage1.angular_m", LBL_INT(stage1.angular_m)},
      {"stage1.additive_m", LBL_F64(stage1.additive_m)},
      {"stage1.anneal_frac", LBL_F64(stage1.anneal_frac)},

      {"stage2.skip", LBL_BOOL(stage2.skip)},
      {"stage2.loss",
       Field{[](const CvcPlan& p) { return to_string(p.stage2.loss); },
             [](CvcPlan& p, const std::string& k, const std::string& v) {
               p.stage2.loss = parse_enum<VerLossKind>(
                   k, v, {{"triplet", VerLossKind::Triplet}, {"contrastive", VerLossKind::Contrastive}});
             }}},
      {"stage2.iterations", LBL_U64(stage2.iterations)},
      {"stage2.lr", LBL_F64(stage2.lr)},
      {"stage2.momentum", LBL_F64(stage2.momentum)},
      {"stage2.weight_decay", LBL_F64(stage2.weight_decay)},
      {"stage2.margin", LBL_F64(stage2.margin)},
      {"stage2.tau", LBL_F64(stage2.tau)},
      {"stage2.swap", LBL_BOOL(stage2.swap)},
      {"stage2.mine", LBL_BOOL(stage2.mine)},

      {"stage3.skip", LBL_BOOL(stage3.skip)},
      {"stage3.selection",
       Field{[](const CvcPlan& p) { return to_string(p.stage3.selection); },
             [](CvcPlan& p, const std::string& k, const std::string& v) {
               p.stage3.selection = parse_enum<SelectionKind>(
                   k, v, {{"random", SelectionKind::Random},
                          {"dominant", SelectionKind::Dominant},
                          {"full", SelectionKind::Full}});
             }}},
      {"stage3.n_iter", LBL_U64(stage3.n_iter)},
      {"stage3.q", LBL_U64(stage3.q)},
      {"stage3.c", LBL_U64(stage3.c)},
      {"stage3.prototype_mode",
       Field{[](const CvcPlan& p) { return to_string(p.stage3.prototype_mode); },
             [](CvcPlan& p, const std::string& k, const std::string& v) {
               p.stage3.prototype_mode = parse_enum<PrototypeMode>(
                   k, v, {{"id", PrototypeMode::Id}, {"avg", PrototypeMode::Avg}});
             }}},
      {"stage3.loss",
       Field{[](const CvcPlan& p) { return to_string(p.stage3.loss); },
             [](CvcPlan& p, const std::string& k, const std::string& v) {
               p.stage3.loss = parse_cls(k, v);
             }}},
      {"stage3.queue_update", LBL_BOOL(stage3.queue_update)},
      {"stage3.iterations", LBL_U64(stage3.iterations)},
      {"stage3.lr", LBL_F64(stage3.lr)},
      {"stage3.momentum", LBL_F64(stage3.momentum)},
      {"stage3.weight_decay", LBL_F64(stage3.weight_decay)},
      {"stage3.proto_lr", LBL_F64(stage3.proto_lr)},
      {"stage3.scale", LBL_F64(stage3.scale)},
      {"stage3.angular_m", LBL_INT(stage3.angular_m)},
      {"stage3.additive_m", LBL_F64(stage3.additive_m)},
      {"stage3.additive_s", LBL_F64(stage3.additive_s)},
      {"stage3.anneal_frac", LBL_F64(stage3.anneal_frac)},
  };
  return fields;
}

#undef LBL_U64
#undef LBL_F64
#undef LBL_BOOL
#undef LBL_STR
#undef LBL_INT

const Field& field(const std::string& key) {
  for (const auto& [k, f] : registry())
    if (k == key) return f;
  fail(Errc::ConfigError, "unknown key '" + key + "'");
}

}  // namespace

void CvcPlan::set(const std::string& key, const std::string& value) {
  field(key).set(*this, key, trim(value));
}

std::string CvcPlan::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& CvcPlan::keys() {
  static const std::vector<std::string> ks = [] {
    std::vector<std::string> out;
    for (const auto& [k, f] : registry()) out.push_back(k);
    return out;
  }();
  return ks;
}

void CvcPlan::validate() const {
  auto cfg = [](bool ok, const std::string& msg) { require(ok, Errc::ConfigError, msg); };
  cfg(batch_classes >= 2, "run.batch_classes must be at least 2");
  cfg(dim >= 2, "model.dim must be at least 2");
  cfg(lr_window >= 1, "run.lr_window must be positive");
  for (double f : far_targets) cfg(f > 0.0 && f < 1.0, "run.far_targets must lie in (0, 1)");
  cfg(stage2.tau > -1.0 && stage2.tau < 1.0, "stage2.tau must lie in (-1, 1)");
  cfg(stage3.q <= stage3.c, "stage3.q must not exceed stage3.c");
  cfg(stage3.n_iter >= batch_classes, "stage3.n_iter must cover the batch labels");
  for (int m : {stage1.angular_m, stage3.angular_m})
    cfg(m >= 1 && m <= 4, "angular_m must lie in {1,2,3,4}");
  for (double a : {stage1.anneal_frac, stage3.anneal_frac})
    cfg(a >= 0.0 && a <= 1.0, "anneal_frac must lie in [0, 1]");
  for (double wd : {stage1.weight_decay, stage2.weight_decay, stage3.weight_decay})
    cfg(wd >= 0.0, "weight_decay must be non-negative");
  cfg(stage3.additive_m >= 0.0 && stage3.additive_m < 1.0, "stage3.additive_m must lie in [0, 1)");
}

std::string CvcPlan::to_text() const {
  std::ostringstream os;
  std::string section;
  for (const auto& key : keys()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << get(key) << '\n';
  }
  return os.str();
}

std::string CvcPlan::stage_pattern() const {
  std::string s;
  s += stage1.skip ? '#' : 'C';
  s += stage2.skip ? '#' : 'V';
  s += stage3.skip ? '#' : 'C';
  return s;
}

std::vector<std::pair<std::string, std::string>> parse_sections(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string section;
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (line.front() == '[') {
      require(line.back() == ']' && line.size() > 2, Errc::ConfigError,
              where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, Errc::ConfigError, where + ": expected key = value");
    require(!section.empty(), Errc::ConfigError, where + ": key outside of a section");
    const std::string key = section + "." + trim(line.substr(0, eq));
    require(seen.insert(key).second, Errc::ConfigError, where + ": duplicate key '" + key + "'");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::IoError, "cannot open for reading: " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

CvcPlan parse_plan(const std::string& text) {
  CvcPlan plan;
  for (const auto& [k, v] : parse_sections(text)) plan.set(k, v);
  plan.validate();
  return plan;
}

CvcPlan load_plan(const std::filesystem::path& path) { return parse_plan(read_text_file(path)); }

}  // namespace lbl
