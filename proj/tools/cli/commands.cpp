#include "cli/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "vecprobe/error.hpp"
#include "vecprobe/evaluation.hpp"
#include "vecprobe/rng.hpp"

namespace vecprobe::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Files written by one command; removed unless the command completes.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_dir_ = true;
    }
  }
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : files_) fs::remove(p, ec);
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

  std::ofstream open(const std::string& name) {
    const fs::path p = dir_ / name;
    files_.push_back(p);
    names_.push_back(name);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write " + p.string());
    return f;
  }
  void track(const std::string& name) {
    files_.push_back(dir_ / name);
    names_.push_back(name);
  }
  const fs::path& dir() const { return dir_; }
  const std::vector<std::string>& names() const { return names_; }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  std::vector<std::string> names_;
  bool created_dir_ = false;
  bool committed_ = false;
};

std::string num(double v) { return json(v).dump(); }

void require_path(const fs::path& p, const char* key, const std::string& command) {
  if (p.empty()) throw ConfigError(std::string(key) + " is required for '" + command + "'");
  if (!fs::exists(p)) throw ConfigError(std::string(key) + ": no such file " + p.string());
}

struct Dataset {
  ingest::DatasetSplit split;
  std::size_t polyline_count = 0;
};

Dataset load_dataset(const fs::path& tracks_path, const fs::path& map_path, const std::string& name,
                     const RunConfig& rc) {
  const auto tracks = ingest::parse_tracks(tracks_path);
  const auto map = ingest::parse_map(map_path);
  auto cases = ingest::build_cases(tracks, map, rc.window);
  if (cases.empty()) throw DataError("no prediction cases in " + tracks_path.string());
  spdlog::info("{}: {} cases from {}", name.empty() ? "dataset" : name, cases.size(), tracks_path.string());
  Dataset d;
  d.polyline_count = map.size();
  d.split = ingest::split_dataset(std::move(cases), rc.test_fraction, derive_seed(rc.seed, "split"), name);
  return d;
}

Dataset load_dataset(const RunConfig& rc, const std::string& command) {
  require_path(rc.tracks, "data.tracks", command);
  require_path(rc.map, "data.map", command);
  return load_dataset(rc.tracks, rc.map, rc.scenario, rc);
}

fs::path checkpoint_path(const RunConfig& rc, const fs::path& out_dir) {
  return rc.checkpoint.empty() ? out_dir / "checkpoint.json" : rc.checkpoint;
}

model::ModelParams load_model(const RunConfig& rc, const fs::path& out_dir) {
  const fs::path p = checkpoint_path(rc, out_dir);
  if (!fs::exists(p)) throw ConfigError("checkpoint not found: " + p.string());
  auto params = model::load_checkpoint(p);
  if (params.config.history_frames != rc.window.history_frames ||
      params.config.future_frames != rc.window.future_frames) {
    throw ConfigError("checkpoint horizons (" + std::to_string(params.config.history_frames) + ", " +
                      std::to_string(params.config.future_frames) + ") differ from the configured horizons");
  }
  return params;
}

model::TrainConfig train_config(const RunConfig& rc, std::size_t seed_index) {
  model::TrainConfig t = rc.train;
  t.seed = derive_seed(rc.seed, seed_index == 0 ? "train" : "train/" + std::to_string(seed_index));
  return t;
}

std::vector<model::Sample> samples_of(const std::vector<scene::PredictionCase>& cases, const RunConfig& rc,
                                      std::size_t jobs) {
  return model::make_samples(cases, scene::FeatureSchema(), rc.max_segment_length, jobs);
}

const std::vector<scene::PredictionCase>& pick(const ingest::DatasetSplit& s, const std::string& which) {
  return which == "train" ? s.train : s.test;
}

void write_manifest(Outputs& out, const std::string& command, const ConfigMap& config, const RunConfig& rc) {
  json doc;
  doc["command"] = command;
  doc["version"] = kVersion;
  doc["seed"] = rc.seed;
  doc["config_hash"] = config_hash(config);
  doc["config"] = config;
  doc["artifacts"] = out.names();
  auto f = out.open("manifest.json");
  f << doc.dump(2) << '\n';
}

void cmd_synth(Outputs& out, const RunConfig& rc) {
  synth::SynthSpec spec = rc.synth;
  spec.seed = derive_seed(rc.seed, "synth");
  const auto scene = synth::generate(spec);
  for (const char* name : {"tracks.csv", "map.json", "synth_manifest.json"}) out.track(name);
  synth::write_scene(scene, out.dir());
  spdlog::info("synth: {} rows, {} polylines", scene.manifest.track_rows, scene.manifest.polyline_count);
}

void cmd_ingest(Outputs& out, const RunConfig& rc) {
  const Dataset d = load_dataset(rc, "ingest");
  auto keys = [](const std::vector<scene::PredictionCase>& cs) {
    std::vector<std::string> k;
    for (const auto& c : cs) k.push_back(c.key());
    return k;
  };
  json doc{{"scenario", d.split.scenario_name},
           {"split_seed", d.split.seed},
           {"test_fraction", rc.test_fraction},
           {"polyline_count", d.polyline_count},
           {"case_count", d.split.train.size() + d.split.test.size()},
           {"train", keys(d.split.train)},
           {"test", keys(d.split.test)}};
  auto f = out.open("dataset.json");
  f << doc.dump(2) << '\n';
}

void cmd_train(Outputs& out, const RunConfig& rc, std::size_t jobs) {
  const Dataset d = load_dataset(rc, "train");
  const auto samples = samples_of(d.split.train, rc, jobs);
  const auto result = model::train(samples, rc.model, train_config(rc, 0), jobs);
  const fs::path ck = checkpoint_path(rc, out.dir());
  if (ck.parent_path() == out.dir()) out.track(ck.filename().string());
  model::save_checkpoint(result.params, ck);
  auto f = out.open("loss_history.csv");
  f << "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) f << e + 1 << ',' << num(result.loss_history[e]) << '\n';
  spdlog::info("train: final loss {}", result.loss_history.empty() ? 0.0 : result.loss_history.back());
}

json metrics_json(const eval::MetricsReport& m) {
  return {{"minADE", m.min_ade}, {"minFDE", m.min_fde}, {"MR", m.miss_rate}, {"case_count", m.case_count}};
}

void cmd_evaluate(Outputs& out, const RunConfig& rc, std::size_t jobs) {
  const auto params = load_model(rc, out.dir());
  const Dataset d = load_dataset(rc, "evaluate");
  const auto& cases = pick(d.split, rc.eval_split);
  if (cases.empty()) throw DataError("evaluate: the " + rc.eval_split + " split is empty");
  const auto samples = samples_of(cases, rc, jobs);
  auto batch = eval::predict_batch(params, samples, jobs);
  const auto report = eval::evaluate(batch);

  // Constant-velocity reference on the same cases.
  for (std::size_t i = 0; i < cases.size(); ++i) {
    batch.predictions[i] = synth::constant_velocity_predict(scene::normalize_case(cases[i]),
                                                            rc.window.future_frames, rc.hz);
  }
  const auto reference = eval::evaluate(batch);
  json doc{{"split", rc.eval_split}, {"model", metrics_json(report)}, {"constant_velocity", metrics_json(reference)}};
  auto f = out.open("metrics.json");
  f << doc.dump(2) << '\n';
  spdlog::info("evaluate: minADE {} minFDE {} MR {}", report.min_ade, report.min_fde, report.miss_rate);
}

void cmd_cross(Outputs& out, const RunConfig& rc, std::size_t jobs) {
  if (rc.cross.size() < 2) throw ConfigError("cross.scenarios must name at least 2 scenarios");
  std::vector<std::pair<std::string, ingest::DatasetSplit>> scenarios;
  for (const auto& e : rc.cross) {
    require_path(e.tracks, ("cross." + e.name + ".tracks").c_str(), "cross");
    require_path(e.map, ("cross." + e.name + ".map").c_str(), "cross");
    scenarios.emplace_back(e.name, load_dataset(e.tracks, e.map, e.name, rc).split);
  }
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < rc.cross_seed_count; ++i) seeds.push_back(train_config(rc, i).seed);
  const auto m = eval::cross_scenario(scenarios, rc.model, rc.train, seeds, jobs);
  for (const auto& [row, why] : m.failed_rows) spdlog::warn("cross: row '{}' failed: {}", row, why);
  {
    auto f = out.open("cross_matrix.json");
    eval::write_matrix_json(m, f);
  }
  auto f = out.open("cross_matrix.csv");
  eval::write_matrix_csv(m, f);
}

struct AttributionInputs {
  model::ModelParams params;
  std::vector<model::Sample> samples;  // attributed cases
  std::vector<double> means;           // training-split column means
};

AttributionInputs attribution_inputs(const RunConfig& rc, const fs::path& out_dir, const std::string& command,
                                     std::size_t jobs, std::size_t limit) {
  AttributionInputs in{load_model(rc, out_dir), {}, {}};
  const Dataset d = load_dataset(rc, command);
  const auto train_samples = samples_of(d.split.train, rc, jobs);
  in.means = attr::feature_means(train_samples, scene::FeatureSchema());
  std::vector<scene::PredictionCase> chosen;
  if (!rc.render_case.empty() && command == "render") {
    for (const auto* part : {&d.split.train, &d.split.test}) {
      for (const auto& c : *part) {
        if (c.key() == rc.render_case) chosen.push_back(c);
      }
    }
    if (chosen.empty()) throw ConfigError("render.case: no case with key '" + rc.render_case + "'");
  } else {
    const auto& from = pick(d.split, rc.attr_split);
    chosen.assign(from.begin(), from.begin() + static_cast<std::ptrdiff_t>(std::min(limit, from.size())));
  }
  if (chosen.empty()) throw DataError(command + ": the " + rc.attr_split + " split is empty");
  in.samples = samples_of(chosen, rc, jobs);
  return in;
}

attr::BaselineSpec baseline_for(const RunConfig& rc, const AttributionInputs& in, const model::Sample& s) {
  return {rc.attr_sigma, in.means, attr::case_seed(derive_seed(rc.seed, "baseline"), s.key), scene::FeatureSchema()};
}

void cmd_attribute(Outputs& out, const RunConfig& rc, std::size_t jobs) {
  const auto in = attribution_inputs(rc, out.dir(), "attribute", jobs, rc.attr_max_cases);
  const scene::FeatureSchema schema;
  auto csv = out.open("attribution.csv");
  attr::write_attribution_csv_header(csv);
  json cases = json::array();
  std::array<double, 3> type_mean{};
  std::array<double, scene::kFeatureGroupCount> group_mean{};
  for (const auto& s : in.samples) {
    const auto r = attr::integrated_gradients(in.params, s, baseline_for(rc, in, s), rc.attr_steps, jobs);
    attr::write_attribution_csv(s.key, r, s.graph, csv);
    const auto types = attr::aggregate_by_polyline_type(r, s.graph);
    const auto groups = attr::aggregate_by_feature_group(r, schema);
    json g = json::object();
    for (std::size_t k = 0; k < groups.size(); ++k) {
      g[std::string(scene::to_string(static_cast<scene::FeatureGroup>(k)))] = groups[k];
      group_mean[k] += groups[k] / static_cast<double>(in.samples.size());
    }
    for (std::size_t k = 0; k < 3; ++k) type_mean[k] += types[k] / static_cast<double>(in.samples.size());
    cases.push_back({{"case", s.key},
                     {"score_input", r.score_input},
                     {"score_baseline", r.score_baseline},
                     {"completeness_gap", r.completeness_gap},
                     {"polyline_type", {{"target", types[0]}, {"other_agents", types[1]}, {"map", types[2]}}},
                     {"feature_group", g}});
  }
  json g = json::object();
  for (std::size_t k = 0; k < group_mean.size(); ++k) {
    g[std::string(scene::to_string(static_cast<scene::FeatureGroup>(k)))] = group_mean[k];
  }
  json doc{{"sigma", rc.attr_sigma},
           {"steps", rc.attr_steps},
           {"cases", cases},
           {"mean",
            {{"polyline_type", {{"target", type_mean[0]}, {"other_agents", type_mean[1]}, {"map", type_mean[2]}}},
             {"feature_group", g}}}};
  auto f = out.open("attribution_summary.json");
  f << doc.dump(2) << '\n';
}

void cmd_sweep(Outputs& out, const RunConfig& rc, std::size_t jobs) {
  const auto in = attribution_inputs(rc, out.dir(), "sweep", jobs, rc.attr_max_cases);
  const auto points =
      attr::baseline_sweep(in.params, in.samples, rc.sweep_sigmas, in.means, derive_seed(rc.seed, "baseline"), jobs);
  auto f = out.open("sweep.csv");
  f << "sigma,actual,proposed,all_zero,all_gaussian\n";
  for (const auto& p : points) {
    f << num(p.sigma) << ',' << num(p.actual) << ',' << num(p.proposed) << ',' << num(p.all_zero) << ','
      << num(p.all_gaussian) << '\n';
  }
}

void cmd_render(Outputs& out, const RunConfig& rc, std::size_t jobs) {
  const auto in = attribution_inputs(rc, out.dir(), "render", jobs, 1);
  const auto& s = in.samples.front();
  const auto r = attr::integrated_gradients(in.params, s, baseline_for(rc, in, s), rc.attr_steps, jobs);
  const auto relevance = attr::aggregate_by_vector(r);
  auto f = out.open("scene.svg");
  attr::render_svg(s, model::predict(in.params, s.graph), relevance, f);
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth", "ingest", "train", "evaluate",
                                              "cross", "attribute", "sweep", "render"};
  return names;
}

void run_command(const std::string& command, const ConfigMap& config, const fs::path& out_dir, std::size_t jobs) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    throw ConfigError("unknown command '" + command + "'");
  }
  const ConfigMap full = merged_with_defaults(config);
  const RunConfig rc = resolve(full);
  jobs = std::max<std::size_t>(jobs, 1);
  Outputs out(out_dir);
  if (command == "synth") cmd_synth(out, rc);
  else if (command == "ingest") cmd_ingest(out, rc);
  else if (command == "train") cmd_train(out, rc, jobs);
  else if (command == "evaluate") cmd_evaluate(out, rc, jobs);
  else if (command == "cross") cmd_cross(out, rc, jobs);
  else if (command == "attribute") cmd_attribute(out, rc, jobs);
  else if (command == "sweep") cmd_sweep(out, rc, jobs);
  else cmd_render(out, rc, jobs);
  write_manifest(out, command, full, rc);
  out.commit();
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 4;
  return 1;
}

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("vecprobe");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("VECPROBE_LOG");
  const std::string level = env ? env : "info";
  const auto parsed = spdlog::level::from_str(level);
  if (parsed == spdlog::level::off && level != "off") {
    spdlog::set_level(spdlog::level::info);
    spdlog::warn("VECPROBE_LOG: unknown level '{}', using info", level);
  } else {
    spdlog::set_level(parsed);
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Vectorized trajectory prediction with feature attribution"};
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::size_t jobs = 1;
  app.add_option("command", command, "synth | ingest | train | evaluate | cross | attribute | sweep | render")
      ->required();
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--seed", seed, "root seed, overrides run.seed");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--jobs", jobs, "worker thread cap")->check(CLI::PositiveNumber)->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  configure_logging();
  try {
    ConfigMap config = config_path.empty() ? ConfigMap{} : load_config(config_path);
    if (seed) config["run.seed"] = std::to_string(*seed);
    run_command(command, config, out_dir, jobs);
    return 0;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
}

}  // namespace vecprobe::cli
