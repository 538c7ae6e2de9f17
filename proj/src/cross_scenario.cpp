#include <cmath>
#include <ostream>

#include <json.hpp>

#include "vecprobe/error.hpp"
#include "vecprobe/evaluation.hpp"
#include "vecprobe/parallel.hpp"

namespace vecprobe::eval {

const CrossCell& CrossScenarioMatrix::cell(const std::string& train, const std::string& test) const {
  for (const auto& c : cells) {
    if (c.train == train && c.test == test) return c;
  }
  throw Error("no cell for train '" + train + "' / test '" + test + "'");
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

CrossScenarioMatrix cross_scenario(const std::vector<std::pair<std::string, ingest::DatasetSplit>>& scenarios,
                                   const model::ModelConfig& model_config, const model::TrainConfig& train_config,
                                   std::span<const std::uint64_t> seeds, std::size_t jobs) {
  if (scenarios.size() < 2) throw ConfigError("cross_scenario needs at least 2 scenarios");
  if (seeds.empty()) throw ConfigError("cross_scenario needs at least 1 seed");

  const scene::FeatureSchema schema;
  const std::size_t n = scenarios.size();
  std::vector<std::vector<model::Sample>> train_sets(n), test_sets(n);
  for (std::size_t s = 0; s < n; ++s) {
    train_sets[s] = model::make_samples(scenarios[s].second.train, schema, scene::kDefaultMaxSegmentLength, jobs);
    test_sets[s] = model::make_samples(scenarios[s].second.test, schema, scene::kDefaultMaxSegmentLength, jobs);
  }

  // One job per (train scenario, seed); each is single-writer on its model.
  struct Job {
    std::vector<MetricsReport> per_test;
    std::string error;
  };
  const std::size_t job_count = n * seeds.size();
  std::vector<Job> results(job_count);
  parallel_for(job_count, jobs, [&](std::size_t j) {
    const std::size_t s = j / seeds.size();
    model::TrainConfig cfg = train_config;
    cfg.seed = seeds[j % seeds.size()];
    try {
      if (test_sets[s].empty() && train_sets[s].empty()) throw DataError("scenario has no cases");
      const auto trained = model::train(train_sets[s], model_config, cfg, 1);
      for (std::size_t t = 0; t < n; ++t) {
        if (test_sets[t].empty()) throw DataError("scenario '" + scenarios[t].first + "' has an empty test split");
        results[j].per_test.push_back(evaluate(trained.params, test_sets[t], 1));
      }
    } catch (const Error& e) {
      results[j].error = e.what();
      results[j].per_test.clear();
    }
  });

  CrossScenarioMatrix m;
  m.seeds.assign(seeds.begin(), seeds.end());
  for (const auto& sc : scenarios) m.scenarios.push_back(sc.first);
  for (std::size_t s = 0; s < n; ++s) {
    std::string failure;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const Job& job = results[s * seeds.size() + k];
      if (!job.error.empty() && failure.empty()) failure = "seed " + std::to_string(seeds[k]) + ": " + job.error;
    }
    if (!failure.empty()) {
      m.failed_rows[scenarios[s].first] = failure;
      continue;
    }
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<double> ade, fde, mr;
      for (std::size_t k = 0; k < seeds.size(); ++k) {
        const MetricsReport& r = results[s * seeds.size() + k].per_test[t];
        ade.push_back(r.min_ade);
        fde.push_back(r.min_fde);
        mr.push_back(r.miss_rate);
      }
      CrossCell c;
      c.train = scenarios[s].first;
      c.test = scenarios[t].first;
      c.in_distribution = s == t;
      c.min_ade = mean_std(ade);
      c.min_fde = mean_std(fde);
      c.miss_rate = mean_std(mr);
      c.case_count = test_sets[t].size();
      m.cells.push_back(c);
    }
  }
  return m;
}

void write_matrix_json(const CrossScenarioMatrix& m, std::ostream& out) {
  nlohmann::json doc;
  doc["scenarios"] = m.scenarios;
  doc["seeds"] = m.seeds;
  nlohmann::json cells = nlohmann::json::array();
  auto ms = [](const MeanStd& v) { return nlohmann::json{{"mean", v.mean}, {"std", v.std}}; };
  for (const auto& c : m.cells) {
    cells.push_back({{"train", c.train},
                     {"test", c.test},
                     {"in_distribution", c.in_distribution},
                     {"case_count", c.case_count},
                     {"metrics", {{"minADE", ms(c.min_ade)}, {"minFDE", ms(c.min_fde)}, {"MR", ms(c.miss_rate)}}}});
  }
  doc["cells"] = std::move(cells);
  doc["failed_rows"] = m.failed_rows;
  out << doc.dump(2) << '\n';
}

void write_matrix_csv(const CrossScenarioMatrix& m, std::ostream& out) {
  out << "train,test,in_distribution,metric,mean,std\n";
  auto row = [&out](const CrossCell& c, const char* name, const MeanStd& v) {
    out << c.train << ',' << c.test << ',' << (c.in_distribution ? 1 : 0) << ',' << name << ','
        << nlohmann::json(v.mean).dump() << ',' << nlohmann::json(v.std).dump() << '\n';
  };
  for (const auto& c : m.cells) {
    row(c, "minADE", c.min_ade);
    row(c, "minFDE", c.min_fde);
    row(c, "MR", c.miss_rate);
  }
}

}  // namespace vecprobe::eval
