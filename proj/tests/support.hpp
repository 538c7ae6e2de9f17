#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "vecprobe/scenario.hpp"

namespace vecprobe::fixture {

inline scene::TrackPoint point(int frame, Vec2 pos, Vec2 vel) {
  scene::TrackPoint p;
  p.frame = frame;
  p.timestamp_ms = frame * 100;
  p.position = pos;
  p.velocity = vel;
  p.heading = std::atan2(vel.y, vel.x);
  p.length = 4.5;
  p.width = 1.8;
  return p;
}

// Constant-velocity history of `frames` points starting at frame `first`.
inline scene::AgentHistory straight_history(int track, int frames, Vec2 start, Vec2 vel, int first = 1) {
  scene::AgentHistory h{track, {}};
  for (int i = 0; i < frames; ++i) h.points.push_back(point(first + i, start + vel * (0.1 * i), vel));
  return h;
}

// Target on a straight line plus optional context agents and map polylines.
inline scene::PredictionCase simple_case(int context_agents, int map_polylines, int future = 30,
                                         std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  scene::PredictionCase c;
  c.case_id = 1;
  c.target_track = 1;
  c.start_frame = 1;
  const Vec2 v{u(rng) * 0.5, u(rng) * 0.5};
  c.agent_histories.push_back(straight_history(1, 10, {u(rng), u(rng)}, v));
  for (int a = 0; a < context_agents; ++a) {
    c.agent_histories.push_back(straight_history(2 + a, 10, {u(rng), u(rng)}, {u(rng) * 0.5, u(rng) * 0.5}));
  }
  for (int m = 0; m < map_polylines; ++m) {
    scene::Polyline p;
    p.id = m + 1;
    p.kind = m % 2 ? scene::PolylineKind::kBorder : scene::PolylineKind::kLaneMarking;
    p.points = {{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
    c.map_polylines.push_back(p);
  }
  const auto& last = c.agent_histories.front().points.back();
  c.future.positions.resize(static_cast<std::size_t>(future));
  c.future.speed.assign(static_cast<std::size_t>(future), last.speed());
  c.future.heading.assign(static_cast<std::size_t>(future), last.heading);
  c.future.mask.assign(static_cast<std::size_t>(future), 1);
  for (int t = 0; t < future; ++t) c.future.positions[static_cast<std::size_t>(t)] = last.position + v * (0.1 * (t + 1));
  return c;
}

}  // namespace vecprobe::fixture
