#pragma once

// Run manifests: which subcommand ran with which flags, and SHA-256 hashes
// of every file read and written. Two runs with equal manifests produced
// byte-identical outputs.

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wir/binary_io.hpp"

namespace wir::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    fail(Errc::Io, "sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

class Manifest {
 public:
  using json = nlohmann::ordered_json;

  Manifest(std::string subcommand, json flags)
      : subcommand_(std::move(subcommand)), flags_(std::move(flags)) {}

  /// Reads `path` and records its hash; returns the bytes.
  std::string read_input(const std::string& path) {
    std::string bytes = io::read_file(path);
    inputs_.push_back({{"path", path}, {"sha256", sha256_hex(bytes)}});
    return bytes;
  }

  void write_output(const std::string& path, std::string_view bytes) {
    io::write_file(path, bytes);
    outputs_.push_back({{"path", path}, {"sha256", sha256_hex(bytes)}});
  }

  void note(const std::string& key, json value) { notes_[key] = std::move(value); }

  json to_json() const {
    json j;
    j["tool"] = "wir";
    j["version"] = kToolVersion;
    j["subcommand"] = subcommand_;
    j["flags"] = flags_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    if (!notes_.empty()) j["notes"] = notes_;
    return j;
  }

  void save(const std::string& path) const { io::write_file(path, to_json().dump(2) + "\n"); }

 private:
  std::string subcommand_;
  json flags_;
  json inputs_ = json::array();
  json outputs_ = json::array();
  json notes_ = json::object();
};

}  // namespace wir::cli
