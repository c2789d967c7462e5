#include "lbl/binio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "lbl/error.hpp"

namespace lbl::binio {

namespace {

template <typename T>
std::array<unsigned char, sizeof(T)> to_le(T v) {
  std::array<unsigned char, sizeof(T)> b{};
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  return b;
}

template <typename T>
T from_le(std::array<unsigned char, sizeof(T)> b) {
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

}  // namespace

Writer::Writer(const std::filesystem::path& path) : path_(path) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  require(out_.good(), Errc::IoError, "cannot open for writing: " + path.string());
}

void Writer::bytes(const void* p, std::size_t n) {
  out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  require(out_.good(), Errc::IoError, "write failed: " + path_.string());
}

void Writer::magic(std::string_view four_cc) { bytes(four_cc.data(), 4); }
void Writer::u32(std::uint32_t v) { auto b = to_le(v); bytes(b.data(), b.size()); }
void Writer::u64(std::uint64_t v) { auto b = to_le(v); bytes(b.data(), b.size()); }
void Writer::f32(float v) { auto b = to_le(v); bytes(b.data(), b.size()); }
void Writer::f64(double v) { auto b = to_le(v); bytes(b.data(), b.size()); }

void Writer::f32_span(std::span<const double> values) {
  for (double v : values) f32(static_cast<float>(v));
}

void Writer::f64_span(std::span<const double> values) {
  for (double v : values) f64(v);
}

void Writer::str(std::string_view s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void Writer::close() {
  out_.close();
  require(!out_.fail(), Errc::IoError, "close failed: " + path_.string());
}

Reader::Reader(const std::filesystem::path& path) : path_(path) {
  in_.open(path, std::ios::binary);
  require(in_.good(), Errc::IoError, "cannot open for reading: " + path.string());
}

void Reader::bytes(void* p, std::size_t n) {
  in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  require(static_cast<std::size_t>(in_.gcount()) == n, Errc::FormatError,
          "truncated file: " + path_.string());
}

void Reader::expect_magic(std::string_view four_cc) {
  char m[4];
  bytes(m, 4);
  require(std::string_view(m, 4) == four_cc, Errc::FormatError,
          "bad magic in " + path_.string() + " (expected " + std::string(four_cc) + ")");
}

std::uint32_t Reader::u32() { std::array<unsigned char, 4> b; bytes(b.data(), 4); return from_le<std::uint32_t>(b); }
std::uint64_t Reader::u64() { std::array<unsigned char, 8> b; bytes(b.data(), 8); return from_le<std::uint64_t>(b); }
float Reader::f32() { std::array<unsigned char, 4> b; bytes(b.data(), 4); return from_le<float>(b); }
double Reader::f64() { std::array<unsigned char, 8> b; bytes(b.data(), 8); return from_le<double>(b); }

void Reader::f32_into(std::span<double> out) {
  for (double& v : out) v = static_cast<double>(f32());
}

void Reader::f64_into(std::span<double> out) {
  for (double& v : out) v = f64();
}

std::string Reader::str() {
  const std::uint64_t n = u64();
  require(n < (1u << 20), Errc::FormatError, "implausible string length in " + path_.string());
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

void Reader::expect_eof() {
  in_.peek();
  require(in_.eof(), Errc::FormatError, "trailing bytes in " + path_.string());
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::IoError, "cannot open for checksum: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace lbl::binio
