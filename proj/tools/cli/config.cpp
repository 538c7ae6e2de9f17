#include "cli/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "vecprobe/error.hpp"
#include "vecprobe/rng.hpp"

namespace vecprobe::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool is_cross_path_key(const std::string& key) {
  if (!key.starts_with("cross.")) return false;
  const auto last = key.rfind('.');
  if (last <= 6) return false;
  const std::string name = key.substr(6, last - 6);
  const std::string field = key.substr(last + 1);
  if (name.empty() || name.find('.') != std::string::npos) return false;
  return field == "tracks" || field == "map";
}

double to_double(const ConfigMap& c, const std::string& key) {
  const std::string& v = c.at(key);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::int64_t to_int(const ConfigMap& c, const std::string& key) {
  const std::string& v = c.at(key);
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::size_t to_count(const ConfigMap& c, const std::string& key) {
  const std::int64_t v = to_int(c, key);
  if (v < 1) throw ConfigError(key + ": must be >= 1");
  return static_cast<std::size_t>(v);
}

bool to_bool(const ConfigMap& c, const std::string& key) {
  const std::string& v = c.at(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string choice(const ConfigMap& c, const std::string& key, std::initializer_list<const char*> allowed) {
  const std::string& v = c.at(key);
  for (const char* a : allowed) {
    if (v == a) return v;
  }
  throw ConfigError(key + ": unsupported value '" + v + "'");
}

}  // namespace

const ConfigMap& default_config() {
  static const ConfigMap defaults{
      {"data.tracks", ""},
      {"data.map", ""},
      {"data.scenario", ""},
      {"paths.checkpoint", ""},
      {"horizon.history", "10"},
      {"horizon.future", "30"},
      {"horizon.hz", "10"},
      {"horizon.stride", "10"},
      {"segment.max_len", "2"},
      {"model.hidden", "64"},
      {"model.layers", "3"},
      {"model.heads", "1"},
      {"model.layer_norm", "true"},
      {"train.batch_size", "64"},
      {"train.lr", "0.001"},
      {"train.lr_decay", "0.3"},
      {"train.decay_every", "5"},
      {"train.epochs", "30"},
      {"split.test_fraction", "0.2"},
      {"eval.split", "test"},
      {"attr.sigma", "10"},
      {"attr.steps", "64"},
      {"attr.max_cases", "20"},
      {"attr.split", "test"},
      {"sweep.sigmas", "0,10,20,30,40,50"},
      {"synth.kind", "straight-lane"},
      {"synth.segments", "32"},
      {"synth.agents", "2"},
      {"synth.speed_min", "4"},
      {"synth.speed_max", "8"},
      {"synth.duration", "40"},
      {"synth.noise", "0"},
      {"cross.scenarios", ""},
      {"cross.seed_count", "1"},
      {"render.case", ""},
      {"run.seed", "0"},
  };
  return defaults;
}

ConfigMap parse_config(std::istream& in, const std::string& source) {
  ConfigMap out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!default_config().contains(key) && !is_cross_path_key(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
    if (!out.emplace(key, value).second) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return out;
}

ConfigMap load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  return parse_config(f, path.string());
}

ConfigMap merged_with_defaults(const ConfigMap& overrides) {
  ConfigMap out = default_config();
  for (const auto& [k, v] : overrides) out[k] = v;
  return out;
}

std::string canonical_text(const ConfigMap& config) {
  std::string out;
  for (const auto& [k, v] : config) out += k + "=" + v + "\n";
  return out;
}

std::string config_hash(const ConfigMap& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(config))));
  return buf;
}

RunConfig resolve(const ConfigMap& raw) {
  const ConfigMap c = merged_with_defaults(raw);
  RunConfig r;
  r.tracks = c.at("data.tracks");
  r.map = c.at("data.map");
  r.scenario = c.at("data.scenario");
  r.checkpoint = c.at("paths.checkpoint");

  r.hz = to_double(c, "horizon.hz");
  if (!(r.hz > 0.0)) throw ConfigError("horizon.hz: must be > 0");
  r.window.history_frames = static_cast<int>(to_count(c, "horizon.history"));
  r.window.future_frames = static_cast<int>(to_count(c, "horizon.future"));
  r.window.stride = static_cast<int>(to_count(c, "horizon.stride"));
  r.max_segment_length = to_double(c, "segment.max_len");
  if (!(r.max_segment_length > 0.0)) throw ConfigError("segment.max_len: must be > 0");

  r.model.hidden = to_count(c, "model.hidden");
  r.model.layers = to_count(c, "model.layers");
  if (to_int(c, "model.heads") != 1) throw ConfigError("model.heads: only single-head attention is supported");
  r.model.layer_norm = to_bool(c, "model.layer_norm");
  r.model.history_frames = r.window.history_frames;
  r.model.future_frames = r.window.future_frames;
  try {
    r.model.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }

  r.train.batch_size = to_count(c, "train.batch_size");
  r.train.initial_lr = to_double(c, "train.lr");
  r.train.lr_decay_factor = to_double(c, "train.lr_decay");
  r.train.decay_every_epochs = static_cast<int>(to_count(c, "train.decay_every"));
  r.train.epoch_count = static_cast<int>(to_count(c, "train.epochs"));
  try {
    r.train.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }

  r.test_fraction = to_double(c, "split.test_fraction");
  if (!(r.test_fraction > 0.0 && r.test_fraction < 1.0)) throw ConfigError("split.test_fraction: must lie in (0, 1)");
  r.eval_split = choice(c, "eval.split", {"train", "test"});

  r.attr_sigma = to_double(c, "attr.sigma");
  if (r.attr_sigma < 0.0) throw ConfigError("attr.sigma: must be >= 0");
  r.attr_steps = to_count(c, "attr.steps");
  r.attr_max_cases = to_count(c, "attr.max_cases");
  r.attr_split = choice(c, "attr.split", {"train", "test"});

  for (const auto& s : split_list(c.at("sweep.sigmas"))) {
    ConfigMap one{{"sweep.sigmas", s}};
    const double v = to_double(one, "sweep.sigmas");
    if (v < 0.0) throw ConfigError("sweep.sigmas: values must be >= 0");
    r.sweep_sigmas.push_back(v);
  }
  if (r.sweep_sigmas.empty()) throw ConfigError("sweep.sigmas: need at least one value");

  try {
    r.synth.kind = synth::parse_scenario_kind(c.at("synth.kind"));
  } catch (const Error& e) {
    throw ConfigError(std::string("synth.kind: ") + e.what());
  }
  r.synth.segment_count = static_cast<int>(to_count(c, "synth.segments"));
  r.synth.agent_count = static_cast<int>(to_count(c, "synth.agents"));
  r.synth.speed_min = to_double(c, "synth.speed_min");
  r.synth.speed_max = to_double(c, "synth.speed_max");
  r.synth.duration = static_cast<int>(to_count(c, "synth.duration"));
  r.synth.noise_std = to_double(c, "synth.noise");
  r.synth.history_frames = r.window.history_frames;

  std::set<std::string> names;
  for (const auto& name : split_list(c.at("cross.scenarios"))) {
    if (!names.insert(name).second) throw ConfigError("cross.scenarios: duplicate name '" + name + "'");
    const std::string tk = "cross." + name + ".tracks", mk = "cross." + name + ".map";
    if (!c.contains(tk) || !c.contains(mk)) throw ConfigError("cross: scenario '" + name + "' needs " + tk + " and " + mk);
    r.cross.push_back({name, c.at(tk), c.at(mk)});
  }
  for (const auto& [k, v] : c) {
    if (is_cross_path_key(k)) {
      const std::string name = k.substr(6, k.rfind('.') - 6);
      if (!names.contains(name)) throw ConfigError(k + ": scenario '" + name + "' is not listed in cross.scenarios");
    }
  }
  r.cross_seed_count = to_count(c, "cross.seed_count");
  r.render_case = c.at("render.case");

  const std::string& seed = c.at("run.seed");
  const auto [p, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), r.seed);
  if (ec != std::errc() || p != seed.data() + seed.size()) {
    throw ConfigError("run.seed: expected a non-negative integer, got '" + seed + "'");
  }
  return r;
}

}  // namespace vecprobe::cli
