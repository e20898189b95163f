#include "anmt/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace anmt {

std::string fnv1a64_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open file for digest: " + path);
  }
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!is) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["argv"] = argv;
  j["tool_version"] = tool_version;
  j["seed"] = seed;
  j["config"] = config;
  j["input_digests"] = input_digests;
  j["metrics"] = metrics;
  j["outputs"] = outputs;
  return j.dump(2);
}

RunManifest RunManifest::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open manifest: " + path);
  }
  nlohmann::json j;
  is >> j;
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.tool_version = j.value("tool_version", std::string{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.config = j.value("config", std::map<std::string, std::string>{});
  m.input_digests = j.value("input_digests", std::map<std::string, std::string>{});
  m.metrics = j.value("metrics", std::map<std::string, std::string>{});
  m.outputs = j.value("outputs", std::vector<std::string>{});
  return m;
}

void RunManifest::write(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) {
      throw std::runtime_error("cannot write manifest: " + tmp);
    }
    os << to_json() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace anmt
