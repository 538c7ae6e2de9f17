#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"
#include "vecprobe/error.hpp"
#include "vecprobe/evaluation.hpp"
#include "vecprobe/scenario.hpp"

using namespace vecprobe;
using scene::PolylineKind;

TEST(Segment, ShortChainKeepsVertices) {
  scene::Polyline p{4, PolylineKind::kLaneMarking, {{0, 0}, {1, 0}, {1, 1.5}}};
  const auto nodes = scene::segment_polyline(p, 2.0);
  ASSERT_EQ(nodes.size(), 2u);
  EXPECT_EQ(nodes[0].destination, nodes[1].origin);
  EXPECT_EQ(nodes[0].origin, (Vec2{0, 0}));
  EXPECT_EQ(nodes[1].destination, (Vec2{1, 1.5}));
}

TEST(Segment, UniformResampling) {
  scene::Polyline p{1, PolylineKind::kLaneMarking, {{0, 0}, {10, 0}}};
  const auto nodes = scene::segment_polyline(p, 2.0);
  ASSERT_EQ(nodes.size(), 5u);
  for (const auto& n : nodes) EXPECT_NEAR((n.destination - n.origin).norm(), 2.0, 1e-12);
}

TEST(Segment, NoChordExceedsLimit) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-30, 30);
  for (int trial = 0; trial < 50; ++trial) {
    scene::Polyline p{1, PolylineKind::kBorder, {}};
    for (int i = 0; i < 6; ++i) p.points.push_back({u(rng), u(rng)});
    for (const auto& n : scene::segment_polyline(p, 1.7)) EXPECT_LE((n.destination - n.origin).norm(), 1.7 + 1e-9);
  }
}

TEST(Segment, RejectsDegenerateMapPolyline) {
  scene::Polyline p{1, PolylineKind::kBorder, {{2, 2}, {2, 2}}};
  EXPECT_THROW(scene::segment_polyline(p, 2.0), DataError);
}

TEST(Segment, TrajectoryStateFromNextFrame) {
  const auto h = fixture::straight_history(7, 10, {0, 0}, {3, 4});
  const auto nodes = scene::segment_trajectory(h.points, PolylineKind::kTargetTrajectory, 1);
  ASSERT_EQ(nodes.size(), 9u);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    EXPECT_EQ(nodes[i].origin, h.points[i].position);
    EXPECT_EQ(nodes[i].destination, h.points[i + 1].position);
    EXPECT_DOUBLE_EQ(nodes[i].state[0], 5.0);
    EXPECT_DOUBLE_EQ(nodes[i].state[1], h.points[i + 1].heading);
    EXPECT_DOUBLE_EQ(nodes[i].state[2], 4.5);
    EXPECT_DOUBLE_EQ(nodes[i].state[3], 1.8);
  }
}

TEST(Schema, LayoutAndDiscreteColumns) {
  scene::FeatureSchema s;
  EXPECT_EQ(s.row_width(), 16u);
  for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(s.is_discrete(c), (c >= 4 && c < 11) || c == 15) << c;
  EXPECT_THROW(scene::FeatureSchema(5), ConfigError);

  scene::VectorNode n;
  n.origin = {1, 2};
  n.destination = {3, 4};
  n.type_onehot[scene::kind_index(PolylineKind::kStopLine)] = 1.0;
  n.state = {5, 6, 7, 8};
  n.polyline_id = 9;
  std::vector<double> row(16, -1.0);
  n.write_row(s, row.data());
  const std::vector<double> expect{1, 2, 3, 4, 0, 0, 0, 0, 0, 1, 0, 5, 6, 7, 8, 9};
  EXPECT_EQ(row, expect);
}

TEST(Normalize, TranslatesThenRotates) {
  scene::PredictionCase c = fixture::simple_case(0, 0);
  auto& last = c.agent_histories[0].points.back();
  last.position = {100, 50};
  last.heading = std::numbers::pi / 2;
  c.map_polylines.push_back({1, PolylineKind::kBorder, {{100, 51}, {98, 50}}});
  const auto n = scene::normalize_case(c);
  EXPECT_NEAR(n.map_polylines[0].points[0].x, 1.0, 1e-12);
  EXPECT_NEAR(n.map_polylines[0].points[0].y, 0.0, 1e-12);
  EXPECT_NEAR(n.map_polylines[0].points[1].x, 0.0, 1e-12);
  EXPECT_NEAR(n.map_polylines[0].points[1].y, 2.0, 1e-12);
  EXPECT_EQ(n.target().points.back().position, (Vec2{0, 0}));
  EXPECT_DOUBLE_EQ(n.target().points.back().heading, 0.0);
}

TEST(Normalize, Idempotent) {
  const auto once = scene::normalize_case(fixture::simple_case(2, 3));
  EXPECT_TRUE(scene::normalizing_transform(once).is_identity());
  const auto twice = scene::normalize_case(once);
  EXPECT_EQ(twice.map_polylines, once.map_polylines);
  EXPECT_EQ(twice.future.positions, once.future.positions);
}

TEST(Normalize, DisplacementMetricsAreFrameInvariant) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = fixture::simple_case(1, 1, 30, 100 + trial);
    const auto n = scene::normalize_case(c);
    Trajectory world;
    for (const auto& p : c.future.positions) world.push_back(p + Vec2{g(rng), g(rng)});
    Trajectory local;
    for (const auto& p : world) local.push_back(n.normalization.apply(p));
    const std::vector<eval::Mask> masks(1, c.future.mask);
    const std::vector<Trajectory> tw(1, c.future.positions), tn(1, n.future.positions);
    const std::vector<Trajectory> pw(1, world), pn(1, local);
    EXPECT_NEAR(eval::min_ade(pw, tw, masks), eval::min_ade(pn, tn, masks), 1e-9);
    EXPECT_NEAR(eval::min_fde(pw, tw, masks), eval::min_fde(pn, tn, masks), 1e-9);
  }
}

TEST(Normalize, TransformInvertsBack) {
  const auto c = fixture::simple_case(1, 2);
  const auto n = scene::normalize_case(c);
  for (std::size_t i = 0; i < c.future.positions.size(); ++i) {
    const Vec2 back = n.normalization.invert(n.future.positions[i]);
    EXPECT_NEAR(back.x, c.future.positions[i].x, 1e-9);
    EXPECT_NEAR(back.y, c.future.positions[i].y, 1e-9);
  }
}

TEST(GraphInput, GroupCounting) {
  const auto g = scene::build_graph_input(fixture::simple_case(1, 3), scene::FeatureSchema());
  ASSERT_EQ(g.groups.size(), 5u);
  EXPECT_EQ(g.groups[g.target_group].kind, PolylineKind::kTargetTrajectory);
  EXPECT_EQ(g.groups[1].kind, PolylineKind::kAgentTrajectory);

  const auto empty_map = scene::build_graph_input(fixture::simple_case(1, 0), scene::FeatureSchema());
  EXPECT_EQ(empty_map.groups.size(), 2u);
}

TEST(GraphInput, SeventyOneMapPolylines) {
  // CHN Merging ZS0 maps carry 71 polylines.
  const auto g = scene::build_graph_input(fixture::simple_case(2, 71), scene::FeatureSchema());
  std::size_t context = 0, agents = 0;
  for (const auto& grp : g.groups) {
    if (scene::is_trajectory(grp.kind)) ++agents;
    else ++context;
  }
  EXPECT_EQ(context, 71u);
  EXPECT_EQ(agents, 3u);
}

TEST(GraphInput, RowsAreContiguousAndIdsRenumbered) {
  const auto g = scene::build_graph_input(fixture::simple_case(2, 4), scene::FeatureSchema());
  std::size_t row = 0;
  for (std::size_t i = 0; i < g.groups.size(); ++i) {
    EXPECT_EQ(g.groups[i].first_row, row);
    EXPECT_EQ(g.groups[i].polyline_id, static_cast<int>(i) + 1);
    for (std::size_t r = 0; r < g.groups[i].row_count; ++r) {
      EXPECT_DOUBLE_EQ(g.nodes.at(row + r, 15), static_cast<double>(i + 1));
      EXPECT_DOUBLE_EQ(g.nodes.at(row + r, 4 + scene::kind_index(g.groups[i].kind)), 1.0);
    }
    row += g.groups[i].row_count;
  }
  EXPECT_EQ(row, g.node_count());
}

TEST(Geometry, WrapAngleRange) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-12);
}

TEST(Kinds, RoundTripAndRejection) {
  for (std::size_t k = 0; k < scene::kPolylineKindCount; ++k) {
    const auto kind = static_cast<PolylineKind>(k);
    EXPECT_EQ(scene::parse_polyline_kind(scene::to_string(kind)), kind);
  }
  EXPECT_THROW(scene::parse_agent_kind("tram"), DataError);
  EXPECT_EQ(scene::parse_agent_kind("pedestrian/bicycle"), scene::AgentKind::kPedestrian);
}
