#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace rsindex::cli {

struct FileDigest {
  std::string path;
  std::uintmax_t bytes = 0;
  std::string fnv1a64;
};

// 64-bit FNV-1a of the file contents as 16 hex digits.
FileDigest digest_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string cwd;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  double wall_time_seconds = 0.0;
  nlohmann::json artifacts = nlohmann::json::object();
  int exit_code = 0;
  nlohmann::json error;  // null on success

  // Digests are taken at write time, so outputs must already exist.
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

struct LoadedManifest {
  std::vector<std::string> argv;
  std::string cwd;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
};

// Throws kVersion for an unknown format tag and kMalformedSeries when a
// required field is missing.
LoadedManifest read_manifest(const std::filesystem::path& path);

}  // namespace rsindex::cli
