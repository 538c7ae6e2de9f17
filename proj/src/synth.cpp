#include "vecprobe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>

#include <json.hpp>

#include "vecprobe/error.hpp"

namespace vecprobe::synth {

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kStraightLane: return "straight-lane";
    case ScenarioKind::kCurvedLane: return "curved-lane";
    case ScenarioKind::kMerge: return "merge";
    case ScenarioKind::kCrossing: return "crossing";
  }
  return "straight-lane";
}

ScenarioKind parse_scenario_kind(std::string_view text) {
  if (text == "straight-lane" || text == "straight") return ScenarioKind::kStraightLane;
  if (text == "curved-lane" || text == "curved") return ScenarioKind::kCurvedLane;
  if (text == "merge") return ScenarioKind::kMerge;
  if (text == "crossing") return ScenarioKind::kCrossing;
  throw ConfigError("unknown synthetic scenario kind '" + std::string(text) + "'");
}

void SynthSpec::validate() const {
  if (segment_count < 1) throw ConfigError("synth: segment count must be >= 1");
  if (agent_count < 1) throw ConfigError("synth: agent count must be >= 1");
  if (history_frames < 1) throw ConfigError("synth: history frames must be >= 1");
  if (duration < history_frames + 1) {
    throw ConfigError("synth: duration must be >= history frames + 1 (" + std::to_string(history_frames + 1) + ")");
  }
  if (!(speed_min >= 0.0) || !(speed_max >= speed_min) || !std::isfinite(speed_max)) {
    throw ConfigError("synth: need 0 <= speed_min <= speed_max");
  }
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("synth: noise std must be >= 0");
}

namespace {

constexpr double kDt = 0.1;
constexpr double kLeadIn = 40.0;  // arc length before the reference point of each lane
constexpr double kSlotGap = 20.0;
constexpr double kHalfLane = kLaneWidth / 2.0;
constexpr double kMergeAngle = 0.2;

Vec2 dir(double theta) { return {std::cos(theta), std::sin(theta)}; }

// A lane centre line parameterised by arc length.
struct Lane {
  std::function<Vec2(double)> point;
  std::function<double(double)> heading;
};

Lane straight_lane(Vec2 origin, double theta) {
  return {[=](double s) { return origin + dir(theta) * s; }, [=](double) { return theta; }};
}

Lane curved_lane(int index) {
  const double r = kCurveRadius + kLaneWidth * index;
  const Vec2 centre{0.0, kCurveRadius};
  const double phi0 = -std::numbers::pi / 2.0 - kLeadIn / r;
  return {[=](double s) { return centre + dir(phi0 + s / r) * r; },
          [=](double s) { return phi0 + s / r + std::numbers::pi / 2.0; }};
}

Lane merge_ramp() {
  const Vec2 start = dir(kMergeAngle) * -kLeadIn;
  return {[=](double s) { return s < kLeadIn ? start + dir(kMergeAngle) * s : Vec2{s - kLeadIn, 0.0}; },
          [=](double s) { return s < kLeadIn ? kMergeAngle : 0.0; }};
}

std::vector<Lane> lanes_for(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kStraightLane:
      return {straight_lane({-kLeadIn, 0.0}, 0.0), straight_lane({-kLeadIn, kLaneWidth}, 0.0)};
    case ScenarioKind::kCurvedLane: return {curved_lane(0), curved_lane(1)};
    case ScenarioKind::kMerge: return {straight_lane({-kLeadIn, 0.0}, 0.0), merge_ramp()};
    case ScenarioKind::kCrossing:
      return {straight_lane({-kLeadIn, 0.0}, 0.0), straight_lane({0.0, -kLeadIn}, std::numbers::pi / 2.0)};
  }
  return {};
}

std::vector<Vec2> line(Vec2 a, Vec2 b) { return {a, b}; }

std::vector<Vec2> arc(double radius, double phi_begin, double phi_end) {
  const Vec2 centre{0.0, kCurveRadius};
  const int steps = std::max(1, static_cast<int>(std::ceil((phi_end - phi_begin) * radius / 1.5)));
  std::vector<Vec2> pts;
  for (int i = 0; i <= steps; ++i) {
    const double phi = phi_begin + (phi_end - phi_begin) * i / steps;
    pts.push_back(centre + dir(phi) * radius);
  }
  return pts;
}

// Map for the lanes, covering arc lengths up to `reach` past each lane start.
std::vector<scene::Polyline> build_map(ScenarioKind kind, double reach) {
  using K = scene::PolylineKind;
  std::vector<scene::Polyline> map;
  auto add = [&map](K k, std::vector<Vec2> pts) {
    map.push_back({static_cast<int>(map.size()) + 1, k, std::move(pts)});
  };
  const double x0 = -kLeadIn;
  const double x1 = reach - kLeadIn;
  switch (kind) {
    case ScenarioKind::kStraightLane:
      add(K::kBorder, line({x0, -kHalfLane}, {x1, -kHalfLane}));
      add(K::kLaneMarking, line({x0, kHalfLane}, {x1, kHalfLane}));
      add(K::kBorder, line({x0, kHalfLane + kLaneWidth}, {x1, kHalfLane + kLaneWidth}));
      break;
    case ScenarioKind::kCurvedLane: {
      const double phi0 = -std::numbers::pi / 2.0 - kLeadIn / kCurveRadius;
      const double phi1 = std::min(phi0 + reach / kCurveRadius, phi0 + 1.9 * std::numbers::pi);
      add(K::kBorder, arc(kCurveRadius - kHalfLane, phi0, phi1));
      add(K::kLaneMarking, arc(kCurveRadius + kHalfLane, phi0, phi1));
      add(K::kBorder, arc(kCurveRadius + kHalfLane + kLaneWidth, phi0, phi1));
      break;
    }
    case ScenarioKind::kMerge: {
      add(K::kBorder, line({x0, kHalfLane}, {x1, kHalfLane}));
      add(K::kBorder, line({0.0, -kHalfLane}, {x1, -kHalfLane}));
      const Vec2 n = dir(kMergeAngle + std::numbers::pi / 2.0) * kHalfLane;
      const Vec2 start = dir(kMergeAngle) * -kLeadIn;
      add(K::kBorder, line(start - n, Vec2{0.0, 0.0} - n));
      add(K::kLaneMarking, line({x0, -kHalfLane}, {0.0, -kHalfLane}));
      add(K::kVirtualLine, line({0.0, -kHalfLane - 1.0}, {0.0, kHalfLane}));
      break;
    }
    case ScenarioKind::kCrossing:
      add(K::kBorder, line({x0, -kHalfLane}, {x1, -kHalfLane}));
      add(K::kBorder, line({x0, kHalfLane}, {x1, kHalfLane}));
      add(K::kBorder, line({-kHalfLane, x0}, {-kHalfLane, x1}));
      add(K::kBorder, line({kHalfLane, x0}, {kHalfLane, x1}));
      add(K::kStopLine, line({-4.0, -kHalfLane}, {-4.0, kHalfLane}));
      add(K::kStopLine, line({-kHalfLane, -4.0}, {kHalfLane, -4.0}));
      add(K::kCrosswalk, {{-3.5, -kHalfLane}, {-2.5, -kHalfLane}, {-2.5, kHalfLane}, {-3.5, kHalfLane}, {-3.5, -kHalfLane}});
      break;
  }
  return map;
}

}  // namespace

SynthScene generate(const SynthSpec& spec) {
  spec.validate();
  const std::vector<Lane> lanes = lanes_for(spec.kind);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> jitter(-5.0, 5.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SynthScene out;
  const int slots = (spec.agent_count + static_cast<int>(lanes.size()) - 1) / static_cast<int>(lanes.size());
  double reach = kLeadIn + kSlotGap * slots + 5.0 + spec.speed_max * kDt * spec.duration + 30.0;

  for (int seg = 0; seg < spec.segment_count; ++seg) {
    for (int a = 0; a < spec.agent_count; ++a) {
      const Lane& lane = lanes[static_cast<std::size_t>(a) % lanes.size()];
      const int slot = a / static_cast<int>(lanes.size());
      const double speed = spec.speed_min == spec.speed_max
                               ? spec.speed_min
                               : std::uniform_real_distribution<double>(spec.speed_min, spec.speed_max)(rng);
      const double s0 = kLeadIn + kSlotGap * slot + jitter(rng);
      Vec2 p = lane.point(s0);
      for (int f = 1; f <= spec.duration; ++f) {
        const double s = s0 + speed * kDt * (f - 1);
        const double heading = wrap_angle(lane.heading(s));
        const Vec2 v = dir(heading) * speed;
        ingest::TrackRow row;
        row.case_id = seg + 1;
        row.track_id = a + 1;
        row.point.frame = f;
        row.point.timestamp_ms = static_cast<std::int64_t>(f) * 100;
        row.point.position = p;
        row.point.velocity = v;
        row.point.heading = heading;
        row.point.agent_kind = scene::AgentKind::kCar;
        row.point.length = 4.5;
        row.point.width = 1.8;
        out.tracks.rows.push_back(row);
        p = p + v * kDt;
      }
    }
  }
  if (spec.noise_std > 0.0) {
    for (auto& row : out.tracks.rows) {
      const double nx = noise(rng), ny = noise(rng);
      row.point.position = row.point.position + Vec2{nx, ny} * spec.noise_std;
    }
  }

  out.map = build_map(spec.kind, reach);

  SynthManifest& m = out.manifest;
  m.kind = std::string(to_string(spec.kind));
  m.segment_count = spec.segment_count;
  m.agents_per_segment = spec.agent_count;
  m.agent_count = spec.segment_count * spec.agent_count;
  m.duration = spec.duration;
  m.noise_std = spec.noise_std;
  m.seed = spec.seed;
  m.polyline_count = out.map.size();
  std::map<std::string, std::size_t> by_kind;
  for (const auto& p : out.map) ++by_kind[std::string(scene::to_string(p.kind))];
  m.polylines_by_kind.assign(by_kind.begin(), by_kind.end());
  m.track_rows = out.tracks.rows.size();
  return out;
}

void write_manifest(const SynthManifest& m, std::ostream& out) {
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& [k, n] : m.polylines_by_kind) kinds[k] = n;
  nlohmann::json doc{{"kind", m.kind},
                     {"segment_count", m.segment_count},
                     {"agent_count", m.agent_count},
                     {"agents_per_segment", m.agents_per_segment},
                     {"duration", m.duration},
                     {"noise_std", m.noise_std},
                     {"seed", m.seed},
                     {"polyline_count", m.polyline_count},
                     {"polylines_by_kind", kinds},
                     {"track_rows", m.track_rows}};
  out << doc.dump(2) << '\n';
}

void write_scene(const SynthScene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write " + p.string());
    return f;
  };
  {
    auto f = open(dir / "tracks.csv");
    ingest::write_tracks(scene.tracks, f);
  }
  {
    auto f = open(dir / "map.json");
    ingest::write_map(scene.map, f);
  }
  auto f = open(dir / "synth_manifest.json");
  write_manifest(scene.manifest, f);
}

Trajectory constant_velocity_predict(const scene::PredictionCase& c, int future_frames, double hz) {
  const auto& pts = c.target().points;
  if (pts.size() < 2) throw DataError("constant velocity needs at least 2 history frames");
  if (future_frames < 1 || !(hz > 0.0)) throw ConfigError("constant velocity: bad horizon");
  const scene::TrackPoint& last = pts.back();
  Trajectory out;
  out.reserve(static_cast<std::size_t>(future_frames));
  for (int k = 1; k <= future_frames; ++k) out.push_back(last.position + last.velocity * (k / hz));
  return out;
}

}  // namespace vecprobe::synth
