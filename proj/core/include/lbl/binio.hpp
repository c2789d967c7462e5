#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lbl::binio {

/// Little-endian writer over an ofstream. Errors surface as IoError with the
/// path attached.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);

  void magic(std::string_view four_cc);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void f32_span(std::span<const double> values);
  void f64_span(std::span<const double> values);
  /// u64 length followed by raw bytes.
  void str(std::string_view s);
  void close();

 private:
  void bytes(const void* p, std::size_t n);
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  /// Throws FormatError if the next four bytes differ from `four_cc`.
  void expect_magic(std::string_view four_cc);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void f32_into(std::span<double> out);
  void f64_into(std::span<double> out);
  std::string str();
  /// Throws FormatError if trailing bytes remain.
  void expect_eof();

  const std::filesystem::path& path() const { return path_; }

 private:
  void bytes(void* p, std::size_t n);
  std::filesystem::path path_;
  std::ifstream in_;
};

/// FNV-1a over a file's bytes; used for determinism checks and manifests.
std::uint64_t file_checksum(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace lbl::binio
