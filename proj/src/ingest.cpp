#include "vecprobe/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string_view>
#include <tuple>

#include <json.hpp>

#include "vecprobe/error.hpp"

namespace vecprobe::ingest {
namespace {

using scene::AgentKind;
using scene::Polyline;
using scene::PredictionCase;
using scene::TrackPoint;

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw DataError("tracks line " + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view text, std::size_t line, const char* field) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    fail(line, std::string("malformed ") + field + " '" + std::string(text) + "'");
  }
  if (!std::isfinite(v)) fail(line, std::string("non-finite ") + field);
  return v;
}

// Integer columns; INTERACTION exports some of them as "12.0".
std::int64_t parse_integer(std::string_view text, std::size_t line, const char* field) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec == std::errc() && ptr == end && !text.empty()) return v;
  const double d = parse_double(text, line, field);
  if (d != std::floor(d) || std::abs(d) > 9.0e15) fail(line, std::string("non-integer ") + field);
  return static_cast<std::int64_t>(d);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

TrackFile parse_tracks(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("tracks: empty file");
  if (trim(line).starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  if (trim(line) != kTrackHeader) throw DataError("tracks line 1: header does not match '" + std::string(kTrackHeader) + "'");

  TrackFile file;
  std::set<std::tuple<int, int, int>> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto f = split_fields(view);
    if (f.size() != 12) fail(line_no, "expected 12 fields, found " + std::to_string(f.size()));

    TrackRow row;
    row.case_id = static_cast<int>(parse_integer(trim(f[0]), line_no, "case_id"));
    row.track_id = static_cast<int>(parse_integer(trim(f[1]), line_no, "track_id"));
    TrackPoint& p = row.point;
    p.frame = static_cast<int>(parse_integer(trim(f[2]), line_no, "frame_id"));
    p.timestamp_ms = parse_integer(trim(f[3]), line_no, "timestamp_ms");
    try {
      p.agent_kind = scene::parse_agent_kind(trim(f[4]));
    } catch (const DataError& e) {
      fail(line_no, e.what());
    }
    p.position = {parse_double(trim(f[5]), line_no, "x"), parse_double(trim(f[6]), line_no, "y")};
    p.velocity = {parse_double(trim(f[7]), line_no, "vx"), parse_double(trim(f[8]), line_no, "vy")};

    // Vulnerable road users may omit heading and extent.
    const bool vru = p.agent_kind == AgentKind::kPedestrian || p.agent_kind == AgentKind::kBicycle;
    auto optional_field = [&](std::string_view text, const char* name, double fallback) {
      text = trim(text);
      if (text.empty() && vru) return fallback;
      return parse_double(text, line_no, name);
    };
    const double fallback_heading = p.velocity.norm() > 0.0 ? std::atan2(p.velocity.y, p.velocity.x) : 0.0;
    p.heading = wrap_angle(optional_field(f[9], "psi_rad", fallback_heading));
    p.length = optional_field(f[10], "length", 0.0);
    p.width = optional_field(f[11], "width", 0.0);
    if (p.length < 0.0 || p.width < 0.0) fail(line_no, "negative extent");

    if (!seen.emplace(row.case_id, row.track_id, p.frame).second) {
      fail(line_no, "duplicate (case_id, track_id, frame_id) = (" + std::to_string(row.case_id) + ", " +
                        std::to_string(row.track_id) + ", " + std::to_string(p.frame) + ")");
    }
    file.rows.push_back(row);
  }

  // Timestamps must strictly increase with frame along each track.
  std::map<std::pair<int, int>, std::vector<const TrackRow*>> tracks;
  for (const auto& r : file.rows) tracks[{r.case_id, r.track_id}].push_back(&r);
  for (auto& [key, rows] : tracks) {
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->point.frame < b->point.frame; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i]->point.timestamp_ms <= rows[i - 1]->point.timestamp_ms) {
        throw DataError("tracks: non-monotone timestamps in case " + std::to_string(key.first) + " track " +
                        std::to_string(key.second) + " at frame " + std::to_string(rows[i]->point.frame));
      }
    }
  }
  return file;
}

TrackFile parse_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open track file " + path.string());
  return parse_tracks(in);
}

void write_tracks(const TrackFile& tracks, std::ostream& out) {
  out << kTrackHeader << '\n';
  for (const auto& r : tracks.rows) {
    const TrackPoint& p = r.point;
    out << r.case_id << ',' << r.track_id << ',' << p.frame << ',' << p.timestamp_ms << ','
        << scene::to_string(p.agent_kind) << ',' << format_double(p.position.x) << ',' << format_double(p.position.y)
        << ',' << format_double(p.velocity.x) << ',' << format_double(p.velocity.y) << ','
        << format_double(p.heading) << ',' << format_double(p.length) << ',' << format_double(p.width) << '\n';
  }
}

std::vector<Polyline> parse_map(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("map: invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("polylines") || !doc["polylines"].is_array()) {
    throw DataError("map: expected an object with a 'polylines' array");
  }
  std::vector<Polyline> out;
  std::set<int> ids;
  std::size_t index = 0;
  for (const auto& item : doc["polylines"]) {
    const std::string where = "map polyline #" + std::to_string(index++);
    try {
      Polyline p;
      p.id = item.at("id").get<int>();
      p.kind = scene::parse_polyline_kind(item.at("kind").get<std::string>());
      for (const auto& pt : item.at("points")) {
        if (!pt.is_array() || pt.size() != 2) throw DataError(where + ": points must be [x, y] pairs");
        p.points.push_back({pt[0].get<double>(), pt[1].get<double>()});
        if (!std::isfinite(p.points.back().x) || !std::isfinite(p.points.back().y)) {
          throw DataError(where + ": non-finite coordinate");
        }
      }
      if (p.id < 1) throw DataError(where + ": id must be >= 1");
      if (p.points.size() < 2) throw DataError(where + " (id " + std::to_string(p.id) + "): fewer than 2 points");
      for (std::size_t i = 1; i < p.points.size(); ++i) {
        if (p.points[i] == p.points[i - 1]) {
          throw DataError(where + " (id " + std::to_string(p.id) + "): repeated consecutive point");
        }
      }
      if (!ids.insert(p.id).second) throw DataError("map: duplicate polyline id " + std::to_string(p.id));
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<Polyline> parse_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open map file " + path.string());
  return parse_map(in);
}

void write_map(const std::vector<Polyline>& polylines, std::ostream& out) {
  nlohmann::json doc;
  doc["polylines"] = nlohmann::json::array();
  for (const auto& p : polylines) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& pt : p.points) pts.push_back({pt.x, pt.y});
    doc["polylines"].push_back({{"id", p.id}, {"kind", std::string(scene::to_string(p.kind))}, {"points", pts}});
  }
  out << doc.dump() << '\n';
}

std::vector<PredictionCase> build_cases(const TrackFile& tracks, const std::vector<Polyline>& map,
                                        const WindowConfig& window) {
  if (window.history_frames < 1 || window.future_frames < 1 || window.stride < 1) {
    throw ConfigError("history, future and stride must all be >= 1");
  }
  // case_id -> track_id -> frame -> point
  std::map<int, std::map<int, std::map<int, TrackPoint>>> segments;
  for (const auto& r : tracks.rows) segments[r.case_id][r.track_id][r.point.frame] = r.point;

  const int th = window.history_frames;
  const int tf = window.future_frames;
  std::vector<PredictionCase> cases;
  for (const auto& [case_id, agents] : segments) {
    int first = std::numeric_limits<int>::max();
    int last = std::numeric_limits<int>::min();
    for (const auto& [tid, frames] : agents) {
      first = std::min(first, frames.begin()->first);
      last = std::max(last, frames.rbegin()->first);
    }
    for (int start = first; start + th - 1 <= last; start += window.stride) {
      const int obs_end = start + th - 1;

      std::vector<scene::AgentHistory> histories;
      for (const auto& [tid, frames] : agents) {
        scene::AgentHistory h{tid, {}};
        for (auto it = frames.lower_bound(start); it != frames.end() && it->first <= obs_end; ++it) {
          h.points.push_back(it->second);
        }
        if (!h.points.empty()) histories.push_back(std::move(h));
      }

      for (const auto& h : histories) {
        if (static_cast<int>(h.points.size()) != th) continue;
        const auto& frames = agents.at(h.track_id);

        PredictionCase c;
        c.case_id = case_id;
        c.target_track = h.track_id;
        c.start_frame = start;
        c.future.positions.assign(static_cast<std::size_t>(tf), Vec2{});
        c.future.speed.assign(static_cast<std::size_t>(tf), 0.0);
        c.future.heading.assign(static_cast<std::size_t>(tf), 0.0);
        c.future.mask.assign(static_cast<std::size_t>(tf), 0);
        for (int t = 0; t < tf; ++t) {
          const auto it = frames.find(obs_end + 1 + t);
          if (it == frames.end()) break;  // valid prefix only
          const auto ti = static_cast<std::size_t>(t);
          c.future.positions[ti] = it->second.position;
          c.future.speed[ti] = it->second.speed();
          c.future.heading[ti] = it->second.heading;
          c.future.mask[ti] = 1;
        }
        if (c.future.valid_count() == 0) continue;

        c.map_polylines = map;
        for (const auto& other : histories) {
          if (other.track_id == h.track_id || other.points.size() >= 2) c.agent_histories.push_back(other);
        }
        cases.push_back(std::move(c));
      }
    }
  }
  return cases;
}

DatasetSplit split_dataset(std::vector<PredictionCase> cases, double test_fraction, std::uint64_t seed,
                           std::string scenario_name) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  std::vector<int> ids;
  for (const auto& c : cases) ids.push_back(c.case_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw DataError("split needs at least 2 distinct case_ids, found " + std::to_string(ids.size()));

  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ids.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);
  const std::set<int> test_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));

  DatasetSplit split;
  split.seed = seed;
  split.scenario_name = std::move(scenario_name);
  for (auto& c : cases) {
    (test_ids.contains(c.case_id) ? split.test : split.train).push_back(std::move(c));
  }
  return split;
}

}  // namespace vecprobe::ingest
