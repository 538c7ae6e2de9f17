#include "vecprobe/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include <json.hpp>

#include "vecprobe/error.hpp"
#include "vecprobe/parallel.hpp"
#include "vecprobe/rng.hpp"

namespace vecprobe::attr {

using grad::Tensor;

double nmse_score(const Trajectory& prediction, const Trajectory& truth, std::span<const std::uint8_t> mask) {
  if (prediction.size() < mask.size() || truth.size() < mask.size()) throw ShapeError("nmse_score: trajectory shorter than mask");
  double sum = 0.0;
  std::size_t valid = 0;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (!mask[t]) continue;
    const Vec2 d = prediction[t] - truth[t];
    sum += d.x * d.x + d.y * d.y;
    ++valid;
  }
  if (valid == 0) throw DataError("nmse_score: empty mask");
  return -sum / static_cast<double>(valid);
}

void BaselineSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("baseline sigma must be finite and >= 0");
  if (feature_means.size() != schema.row_width()) throw ConfigError("baseline needs one mean per feature column");
  for (double m : feature_means) {
    if (!std::isfinite(m)) throw NumericError("baseline feature means must be finite");
  }
}

std::vector<double> feature_means(std::span<const model::Sample> samples, const scene::FeatureSchema& schema) {
  std::vector<double> sum(schema.row_width(), 0.0);
  std::size_t rows = 0;
  for (const auto& s : samples) {
    const Tensor& x = s.graph.nodes;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += x.at(r, c);
    }
    rows += x.rows();
  }
  if (rows > 0) {
    for (double& v : sum) v /= static_cast<double>(rows);
  }
  return sum;
}

namespace {

enum class BaselineMode { kProposed, kAllGaussian };

Tensor noisy(const Tensor& nodes, const BaselineSpec& spec, BaselineMode mode) {
  spec.validate();
  if (nodes.cols() != spec.schema.row_width()) throw ShapeError("baseline: node width does not match schema");
  Tensor out = nodes;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      // One draw per cell in both modes, so the two baselines share noise.
      const double eps = spec.feature_means[c] + spec.sigma * noise(rng);
      if (mode == BaselineMode::kAllGaussian) {
        out.at(r, c) = eps;
      } else if (spec.schema.is_discrete(c)) {
        out.at(r, c) = 0.0;
      } else {
        out.at(r, c) += eps;
      }
    }
  }
  return out;
}

}  // namespace

Tensor make_baseline(const Tensor& nodes, const BaselineSpec& spec) { return noisy(nodes, spec, BaselineMode::kProposed); }
Tensor make_gaussian_baseline(const Tensor& nodes, const BaselineSpec& spec) { return noisy(nodes, spec, BaselineMode::kAllGaussian); }
Tensor make_zero_baseline(const Tensor& nodes) { return Tensor(nodes.shape(), 0.0); }

double AttributionResult::ig_sum() const {
  double s = 0.0;
  for (double v : ig.data()) s += v;
  return s;
}

AttributionResult integrated_gradients(const ScoreFunction& score, const Tensor& input, const Tensor& baseline,
                                       std::size_t steps, std::size_t jobs) {
  if (steps < 1) throw ConfigError("integrated gradients needs at least one step");
  if (!input.same_shape(baseline)) throw ShapeError("integrated gradients: input and baseline shapes differ");

  AttributionResult r;
  r.steps = steps;
  r.score_input = score(input, nullptr);
  r.score_baseline = score(baseline, nullptr);

  std::vector<Tensor> step_grads(steps);
  parallel_for(steps, jobs, [&](std::size_t i) {
    const std::size_t k = i + 1;
    const double alpha = static_cast<double>(k) / static_cast<double>(steps);
    Tensor point = baseline;
    for (std::size_t j = 0; j < point.size(); ++j) point[j] = baseline[j] + alpha * (input[j] - baseline[j]);
    Tensor g;
    try {
      score(point, &g);
    } catch (const NumericError& e) {
      throw NumericError("integrated gradients: step k=" + std::to_string(k) + ": " + e.what());
    }
    if (!g.same_shape(input)) throw ShapeError("integrated gradients: gradient shape mismatch");
    if (!g.all_finite()) throw NumericError("integrated gradients: non-finite gradient at step k=" + std::to_string(k));
    step_grads[i] = std::move(g);
  });

  Tensor total(input.shape(), 0.0);
  for (const Tensor& g : step_grads) {
    for (std::size_t j = 0; j < total.size(); ++j) total[j] += g[j];
  }
  r.ig = Tensor(input.shape(), 0.0);
  const double inv = 1.0 / static_cast<double>(steps);
  for (std::size_t j = 0; j < total.size(); ++j) r.ig[j] = (input[j] - baseline[j]) * total[j] * inv;
  r.completeness_gap = std::abs(r.ig_sum() - (r.score_input - r.score_baseline));
  return r;
}

ScoreFunction model_score(const model::ModelParams& params, const model::Sample& sample) {
  return [&params, &sample](const Tensor& nodes, Tensor* gradient) {
    model::ForwardPass fp = model::forward(params, sample.graph, nodes);
    grad::Var loss = grad::mse(fp.prediction, sample.truth, sample.future.mask);
    grad::Var f = grad::scale(loss, -1.0);
    if (gradient) {
      fp.tape.backward(f);
      *gradient = fp.tape.grad(fp.input);
    }
    return f.value()[0];
  };
}

AttributionResult integrated_gradients(const model::ModelParams& params, const model::Sample& sample,
                                       const BaselineSpec& spec, std::size_t steps, std::size_t jobs) {
  const Tensor baseline = make_baseline(sample.graph.nodes, spec);
  return integrated_gradients(model_score(params, sample), sample.graph.nodes, baseline, steps, jobs);
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

VectorRelevance aggregate_by_vector(const AttributionResult& result) {
  VectorRelevance v;
  const Tensor& ig = result.ig;
  v.relevance.resize(ig.rows());
  for (std::size_t r = 0; r < ig.rows(); ++r) {
    double s = 0.0;
    for (double x : ig.row(r)) s += x;
    v.relevance[r] = std::abs(s);
  }
  v.normalizer = percentile(v.relevance, 99.0);
  return v;
}

namespace {

template <std::size_t N>
std::array<double, N> to_percent(const std::array<double, N>& mass) {
  double total = 0.0;
  for (double m : mass) total += m;
  std::array<double, N> out{};
  if (total <= 0.0) return out;
  for (std::size_t i = 0; i < N; ++i) out[i] = 100.0 * mass[i] / total;
  return out;
}

}  // namespace

std::array<double, 3> aggregate_by_polyline_type(const AttributionResult& result, const scene::GraphInput& graph) {
  std::array<double, 3> mass{};
  for (const auto& g : graph.groups) {
    std::size_t bucket = 2;
    if (g.kind == scene::PolylineKind::kTargetTrajectory) bucket = 0;
    else if (g.kind == scene::PolylineKind::kAgentTrajectory) bucket = 1;
    for (std::size_t r = g.first_row; r < g.first_row + g.row_count; ++r) {
      for (double x : result.ig.row(r)) mass[bucket] += std::abs(x);
    }
  }
  return to_percent(mass);
}

std::array<double, scene::kFeatureGroupCount> aggregate_by_feature_group(const AttributionResult& result,
                                                                         const scene::FeatureSchema& schema) {
  if (result.ig.cols() != schema.row_width()) throw ShapeError("attribution width does not match schema");
  std::array<double, scene::kFeatureGroupCount> mass{};
  for (std::size_t r = 0; r < result.ig.rows(); ++r) {
    for (std::size_t g = 0; g < scene::kFeatureGroupCount; ++g) {
      const auto& range = schema.ranges()[g];
      for (std::size_t c = range.begin; c < range.end(); ++c) mass[g] += std::abs(result.ig.at(r, c));
    }
  }
  return to_percent(mass);
}

std::uint64_t case_seed(std::uint64_t root, const std::string& case_key) {
  return derive_seed(root, "baseline/" + case_key);
}

std::vector<SweepPoint> baseline_sweep(const model::ModelParams& params, std::span<const model::Sample> samples,
                                       std::span<const double> sigmas, const std::vector<double>& means,
                                       std::uint64_t seed, std::size_t jobs) {
  if (sigmas.empty()) throw ConfigError("baseline sweep needs at least one sigma");
  if (samples.empty()) throw DataError("baseline sweep needs at least one case");
  const scene::FeatureSchema schema;

  auto score = [&params](const model::Sample& s, const Tensor& nodes) {
    model::ForwardPass fp = model::forward(params, s.graph, nodes);
    return nmse_score(model::to_trajectory(fp.prediction.value()), s.future.positions, s.future.mask);
  };

  struct PerCase {
    double actual = 0.0, zero = 0.0;
    std::vector<double> proposed, gaussian;
  };
  std::vector<PerCase> per(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    const model::Sample& s = samples[i];
    per[i].actual = score(s, s.graph.nodes);
    per[i].zero = score(s, make_zero_baseline(s.graph.nodes));
    for (double sigma : sigmas) {
      BaselineSpec spec{sigma, means, case_seed(seed, s.key), schema};
      per[i].proposed.push_back(score(s, make_baseline(s.graph.nodes, spec)));
      per[i].gaussian.push_back(score(s, make_gaussian_baseline(s.graph.nodes, spec)));
    }
  });

  const double inv = 1.0 / static_cast<double>(samples.size());
  std::vector<SweepPoint> out;
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    SweepPoint p;
    p.sigma = sigmas[k];
    for (const auto& c : per) {
      p.actual += c.actual * inv;
      p.all_zero += c.zero * inv;
      p.proposed += c.proposed[k] * inv;
      p.all_gaussian += c.gaussian[k] * inv;
    }
    out.push_back(p);
  }
  return out;
}

void write_attribution_csv_header(std::ostream& out) { out << "case_key,polyline_id,node_index,feature_index,ig\n"; }

void write_attribution_csv(const std::string& case_key, const AttributionResult& result,
                           const scene::GraphInput& graph, std::ostream& out) {
  for (const auto& g : graph.groups) {
    for (std::size_t n = 0; n < g.row_count; ++n) {
      const auto row = result.ig.row(g.first_row + n);
      for (std::size_t f = 0; f < row.size(); ++f) {
        out << case_key << ',' << g.polyline_id << ',' << n << ',' << f << ',' << nlohmann::json(row[f]).dump() << '\n';
      }
    }
  }
}

}  // namespace vecprobe::attr
