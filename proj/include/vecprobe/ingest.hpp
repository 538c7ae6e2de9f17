#pragma once

// INTERACTION-schema track CSV and JSON map ingestion, windowing into
// prediction cases, and segment-level train/test splitting.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vecprobe/scenario.hpp"

namespace vecprobe::ingest {

inline constexpr const char* kTrackHeader = "case_id,track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width";

struct TrackRow {
  int case_id = 0;
  int track_id = 0;
  scene::TrackPoint point;  // frame, timestamp, kinematics, kind, extent

  friend bool operator==(const TrackRow&, const TrackRow&) = default;
};

struct TrackFile {
  std::vector<TrackRow> rows;
  friend bool operator==(const TrackFile&, const TrackFile&) = default;
};

TrackFile parse_tracks(std::istream& in);
TrackFile parse_tracks(const std::filesystem::path& path);
void write_tracks(const TrackFile& tracks, std::ostream& out);

std::vector<scene::Polyline> parse_map(std::istream& in);
std::vector<scene::Polyline> parse_map(const std::filesystem::path& path);
void write_map(const std::vector<scene::Polyline>& polylines, std::ostream& out);

struct WindowConfig {
  int history_frames = scene::kDefaultHistoryFrames;
  int future_frames = scene::kDefaultFutureFrames;
  int stride = scene::kDefaultHistoryFrames;
};

// One case per (target, window start) where the target covers the whole
// observation window and has at least one future frame. Cases come back in
// world coordinates; see scene::normalize_case.
std::vector<scene::PredictionCase> build_cases(const TrackFile& tracks, const std::vector<scene::Polyline>& map,
                                               const WindowConfig& window);

struct DatasetSplit {
  std::vector<scene::PredictionCase> train;
  std::vector<scene::PredictionCase> test;
  std::uint64_t seed = 0;
  std::string scenario_name;
};

// Holds out round(test_fraction * distinct case_ids) recording segments,
// clamped to [1, n-1]. Windows of one segment never straddle the split.
DatasetSplit split_dataset(std::vector<scene::PredictionCase> cases, double test_fraction, std::uint64_t seed,
                           std::string scenario_name = "");

}  // namespace vecprobe::ingest
