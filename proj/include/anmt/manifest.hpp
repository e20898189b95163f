#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace anmt {

inline constexpr const char* kToolVersion = "anmt 0.1.0";

// Record of one CLI run: the exact argument vector, resolved configuration,
// seed, input file digests and metric outputs. Replaying the manifest
// re-executes the recorded argument vector and, in single-threaded mode,
// reproduces every output byte for byte.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string tool_version{kToolVersion};
  std::uint64_t seed{0};
  std::map<std::string, std::string> config;          // resolved flag values
  std::map<std::string, std::string> input_digests;   // path -> fnv1a64 hex
  std::map<std::string, std::string> metrics;
  std::vector<std::string> outputs;

  std::string to_json() const;
  static RunManifest from_json_file(const std::string& path);

  // Atomic write: temp file in the same directory, then rename.
  void write(const std::string& path) const;
};

// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string fnv1a64_file(const std::string& path);

}  // namespace anmt
