#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "vecprobe/attribution.hpp"
#include "vecprobe/error.hpp"

namespace vecprobe::attr {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

struct Frame {
  double min_x, max_y, scale;
  double x(double wx) const { return (wx - min_x) * scale + 20.0; }
  double y(double wy) const { return (max_y - wy) * scale + 20.0; }
};

void polyline(std::ostream& out, const Frame& f, const Trajectory& pts, std::size_t count, const char* colour,
              const char* extra) {
  if (count < 2) return;
  out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"" << extra << " points=\"";
  for (std::size_t i = 0; i < count; ++i) out << (i ? " " : "") << num(f.x(pts[i].x)) << ',' << num(f.y(pts[i].y));
  out << "\"/>\n";
}

}  // namespace

void render_svg(const model::Sample& sample, const Trajectory& prediction, const VectorRelevance& relevance,
                std::ostream& out) {
  const grad::Tensor& nodes = sample.graph.nodes;
  if (relevance.relevance.size() != nodes.rows()) throw ShapeError("render: relevance does not match node count");

  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  auto extend = [&](double x, double y) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  };
  for (std::size_t r = 0; r < nodes.rows(); ++r) {
    extend(nodes.at(r, 0), nodes.at(r, 1));
    extend(nodes.at(r, 2), nodes.at(r, 3));
  }
  const std::size_t valid = sample.future.valid_count();
  for (std::size_t t = 0; t < valid; ++t) extend(sample.future.positions[t].x, sample.future.positions[t].y);
  for (std::size_t t = 0; t < std::min(valid, prediction.size()); ++t) extend(prediction[t].x, prediction[t].y);

  const double span = std::max({max_x - min_x, max_y - min_y, 1.0});
  const Frame f{min_x, max_y, 760.0 / span};
  const double width = (max_x - min_x) * f.scale + 40.0;
  const double height = (max_y - min_y) * f.scale + 40.0;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double norm = relevance.normalizer > 0.0 ? relevance.normalizer : 1.0;
  for (const auto& g : sample.graph.groups) {
    const bool traj = scene::is_trajectory(g.kind);
    for (std::size_t r = g.first_row; r < g.first_row + g.row_count; ++r) {
      const double shade = std::clamp(relevance.relevance[r] / norm, 0.0, 1.0);
      const int red = static_cast<int>(std::lround(200.0 * shade + 40.0 * (1.0 - shade)));
      const int other = static_cast<int>(std::lround(40.0 + 180.0 * (1.0 - shade)));
      out << "<line x1=\"" << num(f.x(nodes.at(r, 0))) << "\" y1=\"" << num(f.y(nodes.at(r, 1))) << "\" x2=\""
          << num(f.x(nodes.at(r, 2))) << "\" y2=\"" << num(f.y(nodes.at(r, 3))) << "\" stroke=\"rgb(" << red << ','
          << other << ',' << other << ")\" stroke-width=\"" << (traj ? 3 : 2) << '"'
          << (traj ? "" : " stroke-dasharray=\"6 4\"") << "/>\n";
    }
  }
  polyline(out, f, sample.future.positions, valid, "green", "");
  polyline(out, f, prediction, std::min(valid, prediction.size()), "blue", " stroke-dasharray=\"2 2\"");
  out << "</svg>\n";
}

}  // namespace vecprobe::attr
