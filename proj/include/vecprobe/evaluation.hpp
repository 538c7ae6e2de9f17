#pragma once

// Displacement and miss-rate metrics, and the cross-scenario
// generalizability matrix.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vecprobe/geometry.hpp"
#include "vecprobe/ingest.hpp"
#include "vecprobe/train.hpp"

namespace vecprobe::eval {

inline constexpr double kLateralThreshold = 1.0;

struct MetricsReport {
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;
  std::size_t case_count = 0;
};

using Mask = std::vector<std::uint8_t>;

// Mean over cases of the per-case average displacement on valid frames.
double min_ade(std::span<const Trajectory> predictions, std::span<const Trajectory> truths,
               std::span<const Mask> masks);
// Mean over cases of the displacement at the last valid frame.
double min_fde(std::span<const Trajectory> predictions, std::span<const Trajectory> truths,
               std::span<const Mask> masks);

// 1 m below 1.4 m/s, 2 m above 11 m/s, linear in between.
double longitudinal_threshold(double speed);

struct MissThresholds {
  double lateral = kLateralThreshold;
  double longitudinal_scale = 1.0;  // multiplies longitudinal_threshold()
};

// Final-frame error is split along/across the ground-truth heading at that
// frame; a miss exceeds either bound. Speeds and headings are per case, taken
// at the final valid frame.
double miss_rate(std::span<const Trajectory> predictions, std::span<const Trajectory> truths,
                 std::span<const Mask> masks, std::span<const double> final_speeds,
                 std::span<const double> final_headings, const MissThresholds& thresholds = {});

struct CaseBatch {
  std::vector<Trajectory> predictions;
  std::vector<Trajectory> truths;
  std::vector<Mask> masks;
  std::vector<double> final_speeds;
  std::vector<double> final_headings;
};

MetricsReport evaluate(const CaseBatch& batch);

// Runs the model on every sample and gathers the batch in the normalized frame.
CaseBatch predict_batch(const model::ModelParams& params, std::span<const model::Sample> samples,
                        std::size_t jobs = 1);
MetricsReport evaluate(const model::ModelParams& params, std::span<const model::Sample> samples,
                       std::size_t jobs = 1);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct CrossCell {
  std::string train;
  std::string test;
  bool in_distribution = false;
  MeanStd min_ade, min_fde, miss_rate;
  std::size_t case_count = 0;
};

struct CrossScenarioMatrix {
  std::vector<std::string> scenarios;
  std::vector<std::uint64_t> seeds;
  std::vector<CrossCell> cells;                      // row-major by train scenario, then test
  std::map<std::string, std::string> failed_rows;  // train scenario -> error

  const CrossCell& cell(const std::string& train, const std::string& test) const;
};

// Sample standard deviation (n - 1); zero for a single value.
MeanStd mean_std(std::span<const double> values);

// Trains one model per (scenario, seed) on that scenario's train split and
// evaluates it on every scenario's test split. A scenario whose training
// fails contributes no cells and is listed in failed_rows.
CrossScenarioMatrix cross_scenario(const std::vector<std::pair<std::string, ingest::DatasetSplit>>& scenarios,
                                   const model::ModelConfig& model_config, const model::TrainConfig& train_config,
                                   std::span<const std::uint64_t> seeds, std::size_t jobs = 1);

void write_matrix_json(const CrossScenarioMatrix& m, std::ostream& out);
void write_matrix_csv(const CrossScenarioMatrix& m, std::ostream& out);

}  // namespace vecprobe::eval
