#include "vecprobe/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "vecprobe/error.hpp"

namespace vecprobe::scene {

std::string_view to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::kCar: return "car";
    case AgentKind::kTruck: return "truck";
    case AgentKind::kPedestrian: return "pedestrian";
    case AgentKind::kBicycle: return "bicycle";
  }
  return "car";
}

AgentKind parse_agent_kind(std::string_view text) {
  if (text == "car") return AgentKind::kCar;
  if (text == "truck") return AgentKind::kTruck;
  if (text == "pedestrian") return AgentKind::kPedestrian;
  if (text == "bicycle") return AgentKind::kBicycle;
  // INTERACTION releases label vulnerable road users with one combined tag.
  if (text == "pedestrian/bicycle") return AgentKind::kPedestrian;
  throw DataError("unknown agent_type '" + std::string(text) + "'");
}

std::string_view to_string(PolylineKind kind) {
  switch (kind) {
    case PolylineKind::kTargetTrajectory: return "target-trajectory";
    case PolylineKind::kAgentTrajectory: return "agent-trajectory";
    case PolylineKind::kLaneMarking: return "lane-marking";
    case PolylineKind::kBorder: return "border";
    case PolylineKind::kVirtualLine: return "virtual-line";
    case PolylineKind::kStopLine: return "stop-line";
    case PolylineKind::kCrosswalk: return "crosswalk";
  }
  return "lane-marking";
}

PolylineKind parse_polyline_kind(std::string_view text) {
  for (std::size_t i = 0; i < kPolylineKindCount; ++i) {
    const auto kind = static_cast<PolylineKind>(i);
    if (text == to_string(kind)) return kind;
  }
  throw DataError("unknown polyline kind '" + std::string(text) + "'");
}

std::string_view to_string(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::kOrigin: return "origin";
    case FeatureGroup::kDestination: return "destination";
    case FeatureGroup::kType: return "type";
    case FeatureGroup::kState: return "state";
    case FeatureGroup::kId: return "id";
  }
  return "origin";
}

FeatureSchema::FeatureSchema(std::size_t kind_count) : kind_count_(kind_count) {
  if (kind_count != kPolylineKindCount) {
    throw ConfigError("feature schema supports exactly " + std::to_string(kPolylineKindCount) + " polyline kinds");
  }
  ranges_[0] = {0, 2, false};
  ranges_[1] = {2, 2, false};
  ranges_[2] = {4, kind_count, true};
  ranges_[3] = {4 + kind_count, 4, false};
  ranges_[4] = {8 + kind_count, 1, true};
}

FeatureGroup FeatureSchema::group_of(std::size_t column) const {
  for (std::size_t g = 0; g < kFeatureGroupCount; ++g) {
    if (column >= ranges_[g].begin && column < ranges_[g].end()) return static_cast<FeatureGroup>(g);
  }
  throw ShapeError("feature column " + std::to_string(column) + " outside schema");
}

void VectorNode::write_row(const FeatureSchema& schema, double* row) const {
  row[schema.range(FeatureGroup::kOrigin).begin] = origin.x;
  row[schema.range(FeatureGroup::kOrigin).begin + 1] = origin.y;
  row[schema.range(FeatureGroup::kDestination).begin] = destination.x;
  row[schema.range(FeatureGroup::kDestination).begin + 1] = destination.y;
  const auto& type = schema.range(FeatureGroup::kType);
  for (std::size_t k = 0; k < type.width; ++k) row[type.begin + k] = type_onehot[k];
  const auto& st = schema.range(FeatureGroup::kState);
  for (std::size_t k = 0; k < st.width; ++k) row[st.begin + k] = state[k];
  row[schema.range(FeatureGroup::kId).begin] = static_cast<double>(polyline_id);
}

namespace {

VectorNode make_node(Vec2 o, Vec2 d, PolylineKind kind, int polyline_id) {
  VectorNode n;
  n.origin = o;
  n.destination = d;
  n.type_onehot[kind_index(kind)] = 1.0;
  n.polyline_id = polyline_id;
  return n;
}

}  // namespace

std::vector<VectorNode> segment_polyline(const Polyline& polyline, double max_seg_len) {
  if (polyline.points.size() < 2) throw DataError("polyline " + std::to_string(polyline.id) + " has fewer than 2 points");
  if (!(max_seg_len > 0.0)) throw ConfigError("max segment length must be positive");

  std::vector<VectorNode> nodes;
  if (is_trajectory(polyline.kind)) {
    for (std::size_t i = 0; i + 1 < polyline.points.size(); ++i) {
      nodes.push_back(make_node(polyline.points[i], polyline.points[i + 1], polyline.kind, polyline.id));
    }
    return nodes;
  }

  const bool degenerate = std::all_of(polyline.points.begin(), polyline.points.end(),
                                      [&](Vec2 p) { return p == polyline.points.front(); });
  if (degenerate) throw DataError("polyline " + std::to_string(polyline.id) + " is degenerate (all points identical)");

  // Resampled vertex chain; original vertices are kept bit-exact.
  std::vector<Vec2> chain{polyline.points.front()};
  for (std::size_t i = 0; i + 1 < polyline.points.size(); ++i) {
    const Vec2 a = polyline.points[i];
    const Vec2 b = polyline.points[i + 1];
    const double len = (b - a).norm();
    if (len == 0.0) continue;
    // Small slack so an exact multiple of max_seg_len does not gain a sliver.
    const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(len / max_seg_len - 1e-12)));
    for (std::size_t k = 1; k < pieces; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(pieces);
      chain.push_back(a + t * (b - a));
    }
    chain.push_back(b);
  }
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    nodes.push_back(make_node(chain[i], chain[i + 1], polyline.kind, polyline.id));
  }
  return nodes;
}

std::vector<VectorNode> segment_trajectory(const std::vector<TrackPoint>& history, PolylineKind kind,
                                           int polyline_id) {
  if (!is_trajectory(kind)) throw DataError("segment_trajectory: not a trajectory kind");
  if (history.size() < 2) throw DataError("trajectory needs at least 2 frames");
  std::vector<VectorNode> nodes;
  nodes.reserve(history.size() - 1);
  for (std::size_t i = 0; i + 1 < history.size(); ++i) {
    VectorNode n = make_node(history[i].position, history[i + 1].position, kind, polyline_id);
    const TrackPoint& s = history[i + 1];
    n.state = {s.speed(), s.heading, s.length, s.width};
    nodes.push_back(n);
  }
  return nodes;
}

std::size_t FutureTruth::valid_count() const {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

std::string PredictionCase::key() const {
  return std::to_string(case_id) + ":" + std::to_string(target_track) + ":" + std::to_string(start_frame);
}

const AgentHistory& PredictionCase::target() const {
  for (const auto& h : agent_histories) {
    if (h.track_id == target_track) return h;
  }
  throw DataError("case " + key() + " has no target history");
}

RigidTransform normalizing_transform(const PredictionCase& c) {
  const AgentHistory& target = c.target();
  if (target.points.empty()) throw DataError("case " + c.key() + " has an empty target history");
  const TrackPoint& last = target.points.back();
  return {last.position, last.heading};
}

PredictionCase normalize_case(const PredictionCase& c) {
  const RigidTransform step = normalizing_transform(c);
  PredictionCase out = c;
  if (step.is_identity()) return out;

  for (auto& poly : out.map_polylines) {
    for (auto& p : poly.points) p = step.apply(p);
  }
  for (auto& hist : out.agent_histories) {
    for (auto& tp : hist.points) {
      tp.position = step.apply(tp.position);
      tp.velocity = step.apply_vector(tp.velocity);
      tp.heading = step.apply_heading(tp.heading);
    }
  }
  for (auto& p : out.future.positions) p = step.apply(p);
  for (auto& h : out.future.heading) h = step.apply_heading(h);
  out.normalization = step.after(c.normalization);

  return out;
}

GraphInput build_graph_input(const PredictionCase& c, const FeatureSchema& schema, double max_seg_len) {
  struct Pending {
    PolylineKind kind;
    std::vector<VectorNode> nodes;
  };
  std::vector<Pending> pending;
  int next_id = 1;

  const AgentHistory& target = c.target();
  pending.push_back({PolylineKind::kTargetTrajectory,
                     segment_trajectory(target.points, PolylineKind::kTargetTrajectory, next_id++)});

  std::vector<const AgentHistory*> others;
  for (const auto& h : c.agent_histories) {
    if (h.track_id != c.target_track && h.points.size() >= 2) others.push_back(&h);
  }
  std::sort(others.begin(), others.end(), [](auto* a, auto* b) { return a->track_id < b->track_id; });
  for (const AgentHistory* h : others) {
    pending.push_back({PolylineKind::kAgentTrajectory,
                       segment_trajectory(h->points, PolylineKind::kAgentTrajectory, next_id++)});
  }
  for (const Polyline& poly : c.map_polylines) {
    Polyline renumbered = poly;
    renumbered.id = next_id++;
    pending.push_back({poly.kind, segment_polyline(renumbered, max_seg_len)});
  }

  std::size_t total = 0;
  for (const auto& p : pending) total += p.nodes.size();

  GraphInput g;
  g.nodes = grad::Tensor::matrix(total, schema.row_width());
  g.target_group = 0;
  std::size_t row = 0;
  for (const auto& p : pending) {
    g.groups.push_back({p.kind, p.nodes.front().polyline_id, row, p.nodes.size()});
    for (const auto& n : p.nodes) n.write_row(schema, g.nodes.row(row++).data());
  }
  return g;
}

}  // namespace vecprobe::scene
