#pragma once

// Scene domain types, polyline segmentation, target-centric normalization and
// graph-input construction.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vecprobe/geometry.hpp"
#include "vecprobe/tensor.hpp"

namespace vecprobe::scene {

inline constexpr double kDefaultFrameRateHz = 10.0;
inline constexpr int kDefaultHistoryFrames = 10;
inline constexpr int kDefaultFutureFrames = 30;
inline constexpr double kDefaultMaxSegmentLength = 2.0;

enum class AgentKind { kCar, kTruck, kPedestrian, kBicycle };

std::string_view to_string(AgentKind kind);
// Throws DataError naming the value for anything outside the enum.
AgentKind parse_agent_kind(std::string_view text);

enum class PolylineKind {
  kTargetTrajectory,
  kAgentTrajectory,
  kLaneMarking,
  kBorder,
  kVirtualLine,
  kStopLine,
  kCrosswalk,
};

inline constexpr std::size_t kPolylineKindCount = 7;

std::string_view to_string(PolylineKind kind);
PolylineKind parse_polyline_kind(std::string_view text);
inline bool is_trajectory(PolylineKind kind) {
  return kind == PolylineKind::kTargetTrajectory || kind == PolylineKind::kAgentTrajectory;
}
inline std::size_t kind_index(PolylineKind kind) { return static_cast<std::size_t>(kind); }

struct TrackPoint {
  int frame = 0;
  std::int64_t timestamp_ms = 0;
  Vec2 position;
  Vec2 velocity;
  double heading = 0.0;
  AgentKind agent_kind = AgentKind::kCar;
  double length = 0.0;
  double width = 0.0;

  double speed() const { return velocity.norm(); }
  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

struct AgentHistory {
  int track_id = 0;
  std::vector<TrackPoint> points;
};

struct Polyline {
  int id = 1;
  PolylineKind kind = PolylineKind::kLaneMarking;
  std::vector<Vec2> points;

  friend bool operator==(const Polyline&, const Polyline&) = default;
};

// Column layout of one vector node row:
//   origin(2) destination(2) type_onehot(K) state(4) polyline_id(1).
enum class FeatureGroup { kOrigin, kDestination, kType, kState, kId };
inline constexpr std::size_t kFeatureGroupCount = 5;
std::string_view to_string(FeatureGroup group);

struct FeatureRange {
  std::size_t begin = 0;
  std::size_t width = 0;
  bool discrete = false;
  std::size_t end() const { return begin + width; }
};

class FeatureSchema {
 public:
  explicit FeatureSchema(std::size_t kind_count = kPolylineKindCount);

  std::size_t kind_count() const { return kind_count_; }
  std::size_t row_width() const { return 2 + 2 + kind_count_ + 4 + 1; }
  const FeatureRange& range(FeatureGroup group) const { return ranges_[static_cast<std::size_t>(group)]; }
  const std::array<FeatureRange, kFeatureGroupCount>& ranges() const { return ranges_; }
  FeatureGroup group_of(std::size_t column) const;
  bool is_discrete(std::size_t column) const { return range(group_of(column)).discrete; }

 private:
  std::size_t kind_count_;
  std::array<FeatureRange, kFeatureGroupCount> ranges_;
};

// (speed, heading, length, width) for trajectory nodes; zeros for map nodes.
using MotionState = std::array<double, 4>;

struct VectorNode {
  Vec2 origin;
  Vec2 destination;
  std::array<double, kPolylineKindCount> type_onehot{};
  MotionState state{};
  int polyline_id = 0;

  // Writes the node into a row of `schema.row_width()` doubles.
  void write_row(const FeatureSchema& schema, double* row) const;
};

// Map polylines are resampled so no chord exceeds `max_seg_len`; original
// vertices are kept. Trajectory kinds give one node per consecutive point
// pair with zero state; use segment_trajectory when motion state is known.
std::vector<VectorNode> segment_polyline(const Polyline& polyline, double max_seg_len);

// One node per consecutive frame pair; node i carries the state of frame i+1.
std::vector<VectorNode> segment_trajectory(const std::vector<TrackPoint>& history, PolylineKind kind,
                                           int polyline_id);

struct FutureTruth {
  Trajectory positions;       // T_f entries; entries past the valid prefix are unused
  std::vector<double> speed;  // per-frame ground-truth speed
  std::vector<double> heading;
  std::vector<std::uint8_t> mask;  // valid prefix

  std::size_t valid_count() const;
};

struct PredictionCase {
  // Identity of the case: recording segment, target track, first history frame.
  int case_id = 0;
  int target_track = 0;
  int start_frame = 0;

  std::vector<Polyline> map_polylines;
  std::vector<AgentHistory> agent_histories;  // includes the target
  FutureTruth future;
  RigidTransform normalization;  // world -> current frame

  std::string key() const;
  const AgentHistory& target() const;
};

// Translates/rotates every coordinate so the target's last observed pose is
// the origin with heading 0. The stored transform accumulates, so predictions
// map back through `normalization.invert`.
PredictionCase normalize_case(const PredictionCase& c);

// Pose transform that normalize_case would apply to `c` next.
RigidTransform normalizing_transform(const PredictionCase& c);

struct NodeGroup {
  PolylineKind kind;
  int polyline_id;
  std::size_t first_row;
  std::size_t row_count;
};

// Node matrix of one case, rows grouped by polyline. Group 0 is the target.
// Adjacency is implicit: complete within a group and complete between groups.
struct GraphInput {
  grad::Tensor nodes;  // total_nodes x row_width
  std::vector<NodeGroup> groups;
  std::size_t target_group = 0;

  std::size_t node_count() const { return nodes.rows(); }
};

GraphInput build_graph_input(const PredictionCase& c, const FeatureSchema& schema,
                             double max_seg_len = kDefaultMaxSegmentLength);

}  // namespace vecprobe::scene
