#pragma once

// Integrated Gradients for trajectory regression: the score is the negative
// masked MSE of the predicted trajectory, and the counterfactual baseline
// zeroes discrete features while shifting continuous ones by Gaussian noise
// centred on the training-set column mean.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vecprobe/grad.hpp"
#include "vecprobe/model.hpp"
#include "vecprobe/train.hpp"

namespace vecprobe::attr {

inline constexpr double kDefaultSigma = 10.0;
inline constexpr std::size_t kDefaultSteps = 64;

// -(1 / valid) * sum over valid frames of |p_hat - p|^2. Throws on an empty mask.
double nmse_score(const Trajectory& prediction, const Trajectory& truth, std::span<const std::uint8_t> mask);

struct BaselineSpec {
  double sigma = kDefaultSigma;
  std::vector<double> feature_means;  // one per schema column
  std::uint64_t seed = 0;
  scene::FeatureSchema schema;

  void validate() const;
};

// Per-column means of every node row across the given samples.
std::vector<double> feature_means(std::span<const model::Sample> samples, const scene::FeatureSchema& schema);

// Discrete columns become 0; continuous columns become x + eps with
// eps ~ N(mean_i, sigma). Deterministic in spec.seed.
grad::Tensor make_baseline(const grad::Tensor& nodes, const BaselineSpec& spec);
// Every element drawn from N(mean_i, sigma), discrete columns included.
grad::Tensor make_gaussian_baseline(const grad::Tensor& nodes, const BaselineSpec& spec);
grad::Tensor make_zero_baseline(const grad::Tensor& nodes);

// Scalar score with its gradient with respect to a flat input.
using ScoreFunction = std::function<double(const grad::Tensor& input, grad::Tensor* gradient)>;

struct AttributionResult {
  grad::Tensor ig;  // same shape as the input
  double score_input = 0.0;
  double score_baseline = 0.0;
  std::size_t steps = 0;
  double completeness_gap = 0.0;  // |sum(ig) - (score_input - score_baseline)|

  double ig_sum() const;
};

// Right-endpoint Riemann sum of the path integral from `baseline` to `input`
// with `steps` interpolation points k/steps, k = 1..steps.
AttributionResult integrated_gradients(const ScoreFunction& score, const grad::Tensor& input,
                                       const grad::Tensor& baseline, std::size_t steps, std::size_t jobs = 1);

// F = nmse_score of the model's prediction against the sample's truth.
ScoreFunction model_score(const model::ModelParams& params, const model::Sample& sample);

AttributionResult integrated_gradients(const model::ModelParams& params, const model::Sample& sample,
                                       const BaselineSpec& spec, std::size_t steps, std::size_t jobs = 1);

struct VectorRelevance {
  std::vector<double> relevance;  // |sum over features| per node
  double normalizer = 0.0;        // 99th percentile of relevance
};

// Linear-interpolated percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

VectorRelevance aggregate_by_vector(const AttributionResult& result);

// Shares of sum |ig| in percent: {target trajectory, other trajectories, map}.
// All zeros when there is no attribution mass.
std::array<double, 3> aggregate_by_polyline_type(const AttributionResult& result, const scene::GraphInput& graph);

// Shares of sum |ig| in percent per schema group (origin, destination, type, state, id).
std::array<double, scene::kFeatureGroupCount> aggregate_by_feature_group(const AttributionResult& result,
                                                                         const scene::FeatureSchema& schema);

struct SweepPoint {
  double sigma = 0.0;
  double actual = 0.0;
  double proposed = 0.0;
  double all_zero = 0.0;
  double all_gaussian = 0.0;

  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

// Mean NMSE over samples for the actual input and three baselines at each
// sigma. `means` are the training-split column means.
std::vector<SweepPoint> baseline_sweep(const model::ModelParams& params, std::span<const model::Sample> samples,
                                       std::span<const double> sigmas, const std::vector<double>& means,
                                       std::uint64_t seed, std::size_t jobs = 1);

// Per-case baseline seed derived from a root seed and the case key.
std::uint64_t case_seed(std::uint64_t root, const std::string& case_key);

void write_attribution_csv_header(std::ostream& out);
void write_attribution_csv(const std::string& case_key, const AttributionResult& result,
                           const scene::GraphInput& graph, std::ostream& out);

// SVG scene: node segments shaded by relevance clamped at the normalizer,
// trajectories solid and map polylines dashed, truth and prediction overlaid.
void render_svg(const model::Sample& sample, const Trajectory& prediction, const VectorRelevance& relevance,
                std::ostream& out);

}  // namespace vecprobe::attr
