#pragma once

// Shared plumbing for the pipeline's file formats. Every format is
//   <magic line> <ASCII header line> <little-endian float32 payload>
// and is read from / written to an in-memory byte string.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wir/error.hpp"

namespace wir::io {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::Io, "short write to " + path);
}

inline void append_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int shift = 0; shift < 32; shift += 8)
    out.push_back(static_cast<char>((bits >> shift) & 0xffU));
}

inline void append_f32(std::string& out, std::span<const double> values) {
  out.reserve(out.size() + 4 * values.size());
  for (double v : values) append_f32(out, v);
}

inline void append_f32(std::string& out, std::span<const float> values) {
  out.reserve(out.size() + 4 * values.size());
  for (float v : values) append_f32(out, v);
}

/// Sequential reader over a byte buffer.
class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool at_end() const noexcept { return pos_ >= bytes_.size(); }

  void expect_magic(std::string_view magic) {
    if (bytes_.substr(pos_, magic.size()) != magic)
      fail(Errc::BadMagic, "expected magic '" + std::string(magic.substr(0, magic.size() - 1)) + "'");
    pos_ += magic.size();
  }

  /// Header line without its trailing newline.
  std::string line() {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string_view::npos) fail(Errc::Truncated, "unterminated header line");
    std::string out(bytes_.substr(pos_, nl - pos_));
    pos_ = nl + 1;
    return out;
  }

  double f32() {
    if (remaining() < 4) fail(Errc::Truncated, "payload ends early");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return static_cast<double>(std::bit_cast<float>(bits));
  }

  void f32(std::span<double> out) {
    if (remaining() / 4 < out.size())
      fail(Errc::Truncated, "payload holds " + std::to_string(remaining() / 4) + " floats, need " +
                                std::to_string(out.size()));
    for (double& v : out) v = f32();
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

/// Splits a header line on single spaces; throws Truncated on field count
/// mismatch.
inline std::vector<std::string> header_fields(const std::string& line, std::size_t expected) {
  std::istringstream in(line);
  std::vector<std::string> fields;
  for (std::string f; in >> f;) fields.push_back(f);
  if (fields.size() != expected)
    fail(Errc::Truncated, "header '" + line + "' has " + std::to_string(fields.size()) +
                              " fields, expected " + std::to_string(expected));
  return fields;
}

inline std::size_t parse_count(const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    fail(Errc::Truncated, "bad count '" + s + "'");
  }
  if (pos != s.size() || s.front() == '-') fail(Errc::Truncated, "bad count '" + s + "'");
  return static_cast<std::size_t>(v);
}

inline bool valid_id(std::string_view id) {
  if (id.empty()) return false;
  for (char c : id)
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return false;
  return true;
}

inline void check_id(std::string_view id, const char* what) {
  require(valid_id(id), Errc::InvalidArgument,
          std::string(what) + " '" + std::string(id) + "' must be non-empty without whitespace");
}

}  // namespace wir::io
