#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lbl/protostore.hpp"

namespace lbl {

enum class ClsLossKind { Softmax, Angular, Additive };
enum class VerLossKind { Triplet, Contrastive };
enum class SelectionKind { Random, Dominant, Full };

struct Stage1Plan {
  bool skip = false;
  ClsLossKind loss = ClsLossKind::Angular;
  std::uint64_t iterations = 2000;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double head_lr = 0.5;
  double scale = 16.0;
  int angular_m = 4;
  double additive_m = 0.35;
  double anneal_frac = 0.2;
};

struct Stage2Plan {
  bool skip = false;
  VerLossKind loss = VerLossKind::Triplet;
  std::uint64_t iterations = 3000;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double margin = 0.2;
  double tau = 0.4;
  bool swap = true;
  bool mine = true;
};

struct Stage3Plan {
  bool skip = false;
  SelectionKind selection = SelectionKind::Dominant;
  std::uint64_t n_iter = 400;
  std::uint64_t q = 10;
  std::uint64_t c = 30;
  PrototypeMode prototype_mode = PrototypeMode::Id;
  ClsLossKind loss = ClsLossKind::Angular;
  bool queue_update = true;
  std::uint64_t iterations = 5000;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double proto_lr = 0.5;
  double scale = 16.0;
  int angular_m = 4;
  double additive_m = 0.35;
  double additive_s = 30.0;
  double anneal_frac = 0.2;
};

/// Declarative three-stage training configuration. The text form is a
/// line-based sectioned key=value file; keys are addressed as
/// "section.key" (e.g. stage3.n_iter) and unknown keys are errors.
struct CvcPlan {
  std::uint64_t seed = 1;
  std::uint64_t batch_classes = 32;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t dim = 32;
  std::uint64_t lr_window = 500;
  std::uint64_t checkpoint_every = 0;  // 0: stage boundaries only
  std::vector<double> far_targets = {1e-2, 1e-3, 1e-4};

  // Dataset paths, used by the command-line front end only.
  std::string thick_path;
  std::string train_path;
  std::string test_path;

  Stage1Plan stage1;
  Stage2Plan stage2;
  Stage3Plan stage3;

  /// Sets one key from its textual value. Throws ConfigError naming the key
  /// when it is unknown or the value does not parse.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Cross-field checks (queue capacities, N_iter bounds need the class count
  /// and are checked again when stage 3 starts).
  void validate() const;

  /// Canonical text form; parse(to_text()) reproduces the plan.
  std::string to_text() const;
  /// Ablation row name such as "CVC" or "##C" from the skip flags.
  std::string stage_pattern() const;
};

/// Parses sectioned key=value text into flat "section.key" -> value pairs.
/// Blank lines and '#' comments are ignored; a key outside a section, a
/// malformed line, or a repeated key is a ConfigError.
std::vector<std::pair<std::string, std::string>> parse_sections(const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

CvcPlan parse_plan(const std::string& text);
CvcPlan load_plan(const std::filesystem::path& path);

std::string to_string(ClsLossKind k);
std::string to_string(VerLossKind k);
std::string to_string(SelectionKind k);
std::string to_string(PrototypeMode m);

}  // namespace lbl
