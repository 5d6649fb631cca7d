#pragma once

// Every artifact-producing command drops a manifest next to its outputs:
// the command, the full config snapshot, seeds, input digests, output paths,
// tool version and wall time. Enough to re-run the exact invocation.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mccf/common.hpp"

namespace mccf {

inline constexpr const char* kToolVersion = "1.0.0";

struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_digests;  // path -> fnv1a64 hex of bytes
  std::vector<std::string> outputs;
  long long wall_ms = 0;
};

inline nlohmann::ordered_json manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = "mccf";
  j["version"] = kToolVersion;
  j["command"] = m.command;
  j["seed"] = m.seed;
  j["config"] = m.config;
  nlohmann::ordered_json inputs;
  for (const auto& [path, digest] : m.input_digests) inputs[path] = digest;
  j["inputs"] = std::move(inputs);
  j["outputs"] = m.outputs;
  j["wall_ms"] = m.wall_ms;
  return j;
}

// For directory outputs the manifest is <dir>/manifest.json; for single-file
// outputs it sits alongside as <file>.manifest.json.
inline void write_manifest(const std::string& path, const RunManifest& m) {
  atomic_write_file(path, manifest_json(m).dump(2) + "\n");
}

}  // namespace mccf
