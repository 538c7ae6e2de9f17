#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include "json.hpp"

#include "support.hpp"
#include "vecprobe/error.hpp"
#include "vecprobe/evaluation.hpp"
#include "vecprobe/synth.hpp"

using namespace vecprobe;
using synth::ScenarioKind;

namespace {

const ScenarioKind kAll[] = {ScenarioKind::kStraightLane, ScenarioKind::kCurvedLane, ScenarioKind::kMerge,
                             ScenarioKind::kCrossing};

std::map<std::pair<int, int>, std::vector<scene::TrackPoint>> by_agent(const ingest::TrackFile& f) {
  std::map<std::pair<int, int>, std::vector<scene::TrackPoint>> out;
  for (const auto& r : f.rows) out[{r.case_id, r.track_id}].push_back(r.point);
  return out;
}

synth::SynthSpec spec_of(ScenarioKind kind, double speed, int duration = 40) {
  synth::SynthSpec s;
  s.kind = kind;
  s.speed_min = s.speed_max = speed;
  s.duration = duration;
  s.seed = 9;
  return s;
}

}  // namespace

TEST(Synth, StraightLaneHalfMetrePerFrameAtFive) {
  const auto scene = synth::generate(spec_of(ScenarioKind::kStraightLane, 5.0));
  const auto agents = by_agent(scene.tracks);
  ASSERT_EQ(agents.size(), 1u);
  const auto& pts = agents.begin()->second;
  ASSERT_EQ(pts.size(), 40u);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_NEAR((pts[i].position - pts[i - 1].position).norm(), 0.5, 1e-12);
    EXPECT_EQ(pts[i].frame, pts[i - 1].frame + 1);
    EXPECT_EQ(pts[i].timestamp_ms, 100 * pts[i].frame);
  }
}

TEST(Synth, BitIdenticalAcrossRuns) {
  for (auto kind : kAll) {
    auto s = spec_of(kind, 5.0);
    s.segment_count = 3;
    s.agent_count = 4;
    s.speed_min = 2.0;
    s.speed_max = 9.0;
    s.noise_std = 0.2;
    const auto a = synth::generate(s);
    const auto b = synth::generate(s);
    EXPECT_EQ(a.tracks, b.tracks);
    EXPECT_EQ(a.map, b.map);
    s.seed = 10;
    EXPECT_NE(synth::generate(s).tracks, a.tracks);
  }
}

TEST(Synth, CurvedLaneQuarterCircle) {
  // 63 steps of 0.1 s at 5 m/s on R = 20: 63 * 0.025 rad.
  const auto scene = synth::generate(spec_of(ScenarioKind::kCurvedLane, 5.0, 64));
  const auto& pts = by_agent(scene.tracks).begin()->second;
  double turned = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) turned += wrap_angle(pts[i].heading - pts[i - 1].heading);
  EXPECT_NEAR(turned, std::numbers::pi / 2, 0.01);
}

TEST(Synth, PositionsIntegrateVelocity) {
  for (auto kind : kAll) {
    auto s = spec_of(kind, 5.0);
    s.agent_count = 3;
    s.speed_min = 1.0;
    s.speed_max = 12.0;
    for (const auto& [key, pts] : by_agent(synth::generate(s).tracks)) {
      for (std::size_t i = 1; i < pts.size(); ++i) {
        const Vec2 step = pts[i].position - (pts[i - 1].position + pts[i - 1].velocity * 0.1);
        EXPECT_LE(step.norm(), 1e-9) << synth::to_string(kind) << " agent " << key.second << " frame " << i;
        EXPECT_NEAR(pts[i].heading, std::atan2(pts[i].velocity.y, pts[i].velocity.x), 1e-12);
      }
    }
  }
}

TEST(Synth, NoiseMovesPositionsOnly) {
  auto s = spec_of(ScenarioKind::kStraightLane, 5.0);
  const auto clean = synth::generate(s);
  s.noise_std = 0.3;
  const auto noisy = synth::generate(s);
  ASSERT_EQ(clean.tracks.rows.size(), noisy.tracks.rows.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < clean.tracks.rows.size(); ++i) {
    const auto& a = clean.tracks.rows[i].point;
    const auto& b = noisy.tracks.rows[i].point;
    EXPECT_EQ(a.velocity, b.velocity);
    const Vec2 d = a.position - b.position;
    sq += d.x * d.x + d.y * d.y;
  }
  const double rms = std::sqrt(sq / (2.0 * static_cast<double>(clean.tracks.rows.size())));
  EXPECT_NEAR(rms, 0.3, 0.1);
}

TEST(Synth, ManifestCounts) {
  for (auto kind : kAll) {
    auto s = spec_of(kind, 5.0, 30);
    s.segment_count = 4;
    s.agent_count = 3;
    const auto scene = synth::generate(s);
    EXPECT_EQ(scene.manifest.agent_count, 12);
    EXPECT_EQ(scene.manifest.agents_per_segment, 3);
    EXPECT_EQ(scene.manifest.track_rows, scene.tracks.rows.size());
    EXPECT_EQ(scene.tracks.rows.size(), 12u * 30u);
    EXPECT_EQ(scene.manifest.polyline_count, scene.map.size());
    std::size_t total = 0;
    for (const auto& [name, n] : scene.manifest.polylines_by_kind) total += n;
    EXPECT_EQ(total, scene.map.size());
    EXPECT_EQ(scene.manifest.kind, synth::to_string(kind));
  }
}

TEST(Synth, Rejections) {
  auto s = spec_of(ScenarioKind::kStraightLane, 5.0);
  s.speed_min = 6.0;
  EXPECT_THROW(synth::generate(s), ConfigError);
  s = spec_of(ScenarioKind::kStraightLane, 5.0, 5);
  EXPECT_THROW(synth::generate(s), ConfigError);
  s = spec_of(ScenarioKind::kStraightLane, 5.0);
  s.noise_std = -1.0;
  EXPECT_THROW(synth::generate(s), ConfigError);
  EXPECT_THROW(synth::parse_scenario_kind("hill"), ConfigError);
  for (auto kind : kAll) EXPECT_EQ(synth::parse_scenario_kind(synth::to_string(kind)), kind);
}

TEST(Synth, WriteSceneRoundTrips) {
  const auto dir = std::filesystem::temp_directory_path() / "vecprobe_synth_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto s = spec_of(ScenarioKind::kMerge, 5.0);
  s.agent_count = 2;
  const auto scene = synth::generate(s);
  synth::write_scene(scene, dir);
  EXPECT_EQ(ingest::parse_tracks(dir / "tracks.csv"), scene.tracks);
  EXPECT_EQ(ingest::parse_map(dir / "map.json"), scene.map);
  std::ifstream mf(dir / "synth_manifest.json");
  const auto m = nlohmann::json::parse(mf);
  EXPECT_EQ(m.at("polyline_count").get<std::size_t>(), scene.map.size());
  std::filesystem::remove_all(dir);
}

TEST(ConstantVelocity, ExactOnStraightKinematics) {
  auto s = spec_of(ScenarioKind::kStraightLane, 5.0, 40);
  s.segment_count = 2;
  s.agent_count = 2;
  s.speed_min = 3.0;
  s.speed_max = 8.0;
  const auto scene = synth::generate(s);
  const auto cases = ingest::build_cases(scene.tracks, scene.map, {10, 30, 40});
  ASSERT_EQ(cases.size(), 4u);
  std::vector<Trajectory> preds, truths;
  std::vector<eval::Mask> masks;
  for (const auto& c : cases) {
    preds.push_back(synth::constant_velocity_predict(c, 30));
    truths.push_back(c.future.positions);
    masks.push_back(c.future.mask);
  }
  EXPECT_LE(eval::min_ade(preds, truths, masks), 1e-9);
}

TEST(ConstantVelocity, StoppedTargetStaysPut) {
  auto c = fixture::simple_case(0, 0);
  c.agent_histories[0] = fixture::straight_history(1, 10, {3, 4}, {0, 0});
  for (const Vec2& p : synth::constant_velocity_predict(c, 30)) EXPECT_EQ(p, (Vec2{3, 4}));
  c.agent_histories[0].points.resize(1);
  EXPECT_THROW(synth::constant_velocity_predict(c, 30), DataError);
}

TEST(ConstantVelocity, CurvedFdeMatchesAnalyticChord) {
  // Target at 5 m/s on an exact R = 20 circle. After 3 s the straight-line
  // guess sits at (15, 0) in the last-point frame; truth sits at
  // (R sin phi, R (1 - cos phi)) with phi = 0.75.
  const double r = 20.0, v = 5.0, dt = 0.1;
  scene::PredictionCase c;
  c.case_id = 1;
  c.target_track = 1;
  scene::AgentHistory h{1, {}};
  for (int i = 0; i < 10; ++i) {
    const double a = -v / r * dt * (9 - i);
    const Vec2 pos{r * std::sin(a), r * (1.0 - std::cos(a))};
    const Vec2 vel{v * std::cos(a), v * std::sin(a)};
    h.points.push_back(fixture::point(i + 1, pos, vel));
  }
  c.agent_histories.push_back(h);
  c.future.mask.assign(30, 1);
  for (int k = 1; k <= 30; ++k) {
    const double a = v / r * dt * k;
    c.future.positions.push_back({r * std::sin(a), r * (1.0 - std::cos(a))});
  }
  const auto pred = synth::constant_velocity_predict(c, 30);
  const std::vector<Trajectory> preds(1, pred), truths(1, c.future.positions);
  const std::vector<eval::Mask> masks(1, c.future.mask);
  const double phi = 0.75;
  const double want = std::hypot(15.0 - r * std::sin(phi), r * (1.0 - std::cos(phi)));
  EXPECT_NEAR(eval::min_fde(preds, truths, masks), want, 1e-9);
}
