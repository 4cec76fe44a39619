#pragma once

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace pipevid {

constexpr const char* kToolVersion = "0.1.0";

inline uint64_t fnv1a_hash(const std::string& bytes) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string file_hash_hex(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return "missing";
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a_hash(bytes)));
  return buf;
}

/// Written into the output directory before any results; re-running a
/// manifest's command reproduces the outputs bitwise.
struct RunManifest {
  std::string command;
  std::string arch_file;
  nlohmann::ordered_json overrides;
  uint64_t seed = 0;
  std::string out_dir;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "pipevid";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["arch_file"] = arch_file;
    j["arch_hash"] = arch_file.empty() ? "none" : file_hash_hex(arch_file);
    j["overrides"] = overrides;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    return j;
  }
};

/// Creates the output directory and writes manifest.json. An existing
/// manifest means a previous run owns the directory: refuse unless forced.
inline void write_manifest(const RunManifest& m, bool force) {
  namespace fs = std::filesystem;
  fs::create_directories(m.out_dir);
  const fs::path path = fs::path(m.out_dir) / "manifest.json";
  if (fs::exists(path) && !force) {
    throw std::runtime_error("output directory " + m.out_dir +
                             " already holds a run manifest; pass --force to overwrite");
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << m.to_json().dump(2) << "\n";
}

}  // namespace pipevid
