#pragma once

// Deterministic synthetic road scenes: kinematically consistent agent tracks
// and a matching vector map, emitted in the ingestion formats.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vecprobe/ingest.hpp"
#include "vecprobe/scenario.hpp"

namespace vecprobe::synth {

enum class ScenarioKind { kStraightLane, kCurvedLane, kMerge, kCrossing };

std::string_view to_string(ScenarioKind kind);
// Accepts "straight-lane", "curved-lane", "merge", "crossing". Throws ConfigError.
ScenarioKind parse_scenario_kind(std::string_view text);

inline constexpr double kLaneWidth = 3.5;
inline constexpr double kCurveRadius = 20.0;  // centre line of the innermost curved lane

struct SynthSpec {
  ScenarioKind kind = ScenarioKind::kStraightLane;
  int segment_count = 1;  // recording segments, emitted as distinct case_ids
  int agent_count = 1;    // agents per segment
  double speed_min = 5.0;
  double speed_max = 5.0;
  int duration = 50;  // frames per agent, numbered from 1
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  int history_frames = scene::kDefaultHistoryFrames;

  void validate() const;  // ConfigError
};

struct SynthManifest {
  std::string kind;
  int segment_count = 0;
  int agent_count = 0;  // total across segments
  int agents_per_segment = 0;
  int duration = 0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  std::size_t polyline_count = 0;
  std::vector<std::pair<std::string, std::size_t>> polylines_by_kind;
  std::size_t track_rows = 0;
};

struct SynthScene {
  ingest::TrackFile tracks;
  std::vector<scene::Polyline> map;
  SynthManifest manifest;
};

// Agents follow their lane at constant speed: heading advances by v/R per
// frame on curves, and each position integrates the previous frame's
// velocity over 1/10 s. Positional noise is added afterwards.
SynthScene generate(const SynthSpec& spec);

void write_manifest(const SynthManifest& manifest, std::ostream& out);
// Writes tracks.csv, map.json and synth_manifest.json into `dir`.
void write_scene(const SynthScene& scene, const std::filesystem::path& dir);

// Extrapolates the target's last observed velocity over future_frames.
// Works in whatever frame the case is expressed in.
Trajectory constant_velocity_predict(const scene::PredictionCase& c, int future_frames,
                                     double hz = scene::kDefaultFrameRateHz);

}  // namespace vecprobe::synth
