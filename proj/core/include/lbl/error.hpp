#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lbl {

enum class Errc {
  InvalidArgument,
  NonFinite,
  DegenerateVector,
  ShapeError,
  TapeMismatch,
  InvalidBatch,
  MissingPositive,
  NotNormalized,
  StaleWorkingSet,
  ResolutionError,
  StageDiverged,
  ConfigError,
  IoError,
  FormatError,
};

std::string_view to_string(Errc code) noexcept;

// Every failure surfaced by the library carries one of the codes above so
// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace lbl
