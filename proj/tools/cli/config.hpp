#pragma once

// Flat `key = value` run configuration with dotted section keys.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "vecprobe/attribution.hpp"
#include "vecprobe/ingest.hpp"
#include "vecprobe/model.hpp"
#include "vecprobe/synth.hpp"
#include "vecprobe/train.hpp"

namespace vecprobe::cli {

// Key -> value text. Every known key is present after defaults are applied.
using ConfigMap = std::map<std::string, std::string>;

// Documented defaults for every fixed key.
const ConfigMap& default_config();

// Parses `key = value` lines; '#' starts a comment. Unknown keys, duplicate
// keys and malformed lines throw ConfigError naming the line. Keys of the form
// cross.<name>.tracks / cross.<name>.map are accepted for any name.
ConfigMap parse_config(std::istream& in, const std::string& source = "config");
ConfigMap load_config(const std::filesystem::path& path);

// Defaults overlaid with `overrides`.
ConfigMap merged_with_defaults(const ConfigMap& overrides);

// Canonical text (sorted `key=value` lines) and its FNV-1a hash.
std::string canonical_text(const ConfigMap& config);
std::string config_hash(const ConfigMap& config);

struct CrossEntry {
  std::string name;
  std::filesystem::path tracks;
  std::filesystem::path map;
};

struct RunConfig {
  std::filesystem::path tracks;
  std::filesystem::path map;
  std::string scenario;
  std::filesystem::path checkpoint;  // empty: <out>/checkpoint.json
  double hz = scene::kDefaultFrameRateHz;
  ingest::WindowConfig window;
  double max_segment_length = scene::kDefaultMaxSegmentLength;
  model::ModelConfig model;
  model::TrainConfig train;
  double test_fraction = 0.2;
  std::string eval_split = "test";
  double attr_sigma = attr::kDefaultSigma;
  std::size_t attr_steps = attr::kDefaultSteps;
  std::size_t attr_max_cases = 20;
  std::string attr_split = "test";
  std::vector<double> sweep_sigmas;
  synth::SynthSpec synth;
  std::vector<CrossEntry> cross;
  std::size_t cross_seed_count = 1;
  std::string render_case;
  std::uint64_t seed = 0;
};

// Typed view; malformed values throw ConfigError naming the key.
RunConfig resolve(const ConfigMap& config);

}  // namespace vecprobe::cli
