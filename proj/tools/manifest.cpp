#include "manifest.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rsindex/errors.hpp"

#ifndef RSINDEX_VERSION
#define RSINDEX_VERSION "0.0.0"
#endif

namespace rsindex::cli {
namespace {

constexpr std::string_view kFormat = "run-manifest/1";

nlohmann::json digest_json(const FileDigest& d) {
  return {{"path", d.path}, {"bytes", d.bytes}, {"fnv1a64", d.fnv1a64}};
}

std::vector<FileDigest> digests_from(const nlohmann::json& list) {
  std::vector<FileDigest> out;
  for (const auto& item : list) {
    out.push_back({item.at("path").get<std::string>(),
                   item.value("bytes", std::uintmax_t{0}),
                   item.value("fnv1a64", std::string{})});
  }
  return out;
}

}  // namespace

FileDigest digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  FileDigest d;
  d.path = path.string();
  if (!in) return d;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    const auto got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
      h *= 0x100000001b3ULL;
    }
    d.bytes += static_cast<std::uintmax_t>(got);
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  d.fnv1a64 = hex;
  return d;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json in = nlohmann::json::array();
  for (const auto& p : inputs) in.push_back(digest_json(digest_file(p)));
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : outputs) out.push_back(digest_json(digest_file(p)));
  nlohmann::json versions = artifacts;
  versions["rsindex"] = RSINDEX_VERSION;
  return {{"format", kFormat},
          {"command", command},
          {"argv", argv},
          {"cwd", cwd},
          {"config", config},
          {"inputs", in},
          {"outputs", out},
          {"seed", seed ? nlohmann::json(*seed) : nlohmann::json()},
          {"wall_time_seconds", wall_time_seconds},
          {"versions", versions},
          {"exit_code", exit_code},
          {"error", error}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorKind::kIo, "cannot write manifest " + path.string());
  }
  out << to_json().dump(2) << '\n';
}

LoadedManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kMalformedSeries,
                path.string() + " is not valid JSON: " + e.what());
  }
  const std::string format = j.value("format", std::string{});
  if (format != kFormat) {
    throw Error(ErrorKind::kVersion, "unsupported manifest format '" + format +
                                         "', expected " + std::string(kFormat));
  }
  try {
    LoadedManifest m;
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.cwd = j.value("cwd", std::string{});
    m.inputs = digests_from(j.value("inputs", nlohmann::json::array()));
    m.outputs = digests_from(j.value("outputs", nlohmann::json::array()));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kMalformedSeries,
                "manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace rsindex::cli
