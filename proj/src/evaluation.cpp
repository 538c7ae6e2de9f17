#include "vecprobe/evaluation.hpp"

#include <cmath>

#include "vecprobe/error.hpp"
#include "vecprobe/parallel.hpp"

namespace vecprobe::eval {
namespace {

void check_batch(std::span<const Trajectory> predictions, std::span<const Trajectory> truths,
                 std::span<const Mask> masks, const char* what) {
  if (predictions.empty()) throw DataError(std::string(what) + ": empty batch");
  if (truths.size() != predictions.size() || masks.size() != predictions.size()) {
    throw ShapeError(std::string(what) + ": predictions, truths and masks are not aligned");
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() < masks[i].size() || truths[i].size() < masks[i].size()) {
      throw ShapeError(std::string(what) + ": trajectory shorter than its mask in case " + std::to_string(i));
    }
  }
}

double displacement(Vec2 a, Vec2 b) { return (a - b).norm(); }

std::size_t final_index(const Mask& mask, std::size_t case_index) {
  std::size_t last = mask.size();
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t]) last = t;
  }
  if (last == mask.size()) throw DataError("case " + std::to_string(case_index) + " has no valid future frame");
  return last;
}

}  // namespace

double min_ade(std::span<const Trajectory> predictions, std::span<const Trajectory> truths,
               std::span<const Mask> masks) {
  check_batch(predictions, truths, masks, "min_ade");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double sum = 0.0;
    std::size_t valid = 0;
    for (std::size_t t = 0; t < masks[i].size(); ++t) {
      if (!masks[i][t]) continue;
      sum += displacement(predictions[i][t], truths[i][t]);
      ++valid;
    }
    if (valid == 0) throw DataError("case " + std::to_string(i) + " has no valid future frame");
    total += sum / static_cast<double>(valid);
  }
  return total / static_cast<double>(predictions.size());
}

double min_fde(std::span<const Trajectory> predictions, std::span<const Trajectory> truths,
               std::span<const Mask> masks) {
  check_batch(predictions, truths, masks, "min_fde");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::size_t t = final_index(masks[i], i);
    total += displacement(predictions[i][t], truths[i][t]);
  }
  return total / static_cast<double>(predictions.size());
}

double longitudinal_threshold(double speed) {
  if (speed < 1.4) return 1.0;
  if (speed <= 11.0) return 1.0 + (speed - 1.4) / (11.0 - 1.4);
  return 2.0;
}

double miss_rate(std::span<const Trajectory> predictions, std::span<const Trajectory> truths,
                 std::span<const Mask> masks, std::span<const double> final_speeds,
                 std::span<const double> final_headings, const MissThresholds& thresholds) {
  check_batch(predictions, truths, masks, "miss_rate");
  if (final_speeds.size() != predictions.size() || final_headings.size() != predictions.size()) {
    throw ShapeError("miss_rate: speeds/headings not aligned with the batch");
  }
  std::size_t misses = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::size_t t = final_index(masks[i], i);
    const Vec2 err = predictions[i][t] - truths[i][t];
    const Vec2 local = rotate(err, -final_headings[i]);
    const double lon = std::abs(local.x);
    const double lat = std::abs(local.y);
    const double lon_limit = thresholds.longitudinal_scale * longitudinal_threshold(final_speeds[i]);
    if (lat > thresholds.lateral || lon > lon_limit) ++misses;
  }
  return static_cast<double>(misses) / static_cast<double>(predictions.size());
}

MetricsReport evaluate(const CaseBatch& b) {
  MetricsReport r;
  r.min_ade = min_ade(b.predictions, b.truths, b.masks);
  r.min_fde = min_fde(b.predictions, b.truths, b.masks);
  r.miss_rate = miss_rate(b.predictions, b.truths, b.masks, b.final_speeds, b.final_headings);
  r.case_count = b.predictions.size();
  return r;
}

CaseBatch predict_batch(const model::ModelParams& params, std::span<const model::Sample> samples, std::size_t jobs) {
  CaseBatch b;
  const std::size_t n = samples.size();
  b.predictions.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) { b.predictions[i] = model::predict(params, samples[i].graph); });
  for (const auto& s : samples) {
    b.truths.push_back(s.future.positions);
    b.masks.push_back(s.future.mask);
    std::size_t last = 0;
    for (std::size_t t = 0; t < s.future.mask.size(); ++t) {
      if (s.future.mask[t]) last = t;
    }
    b.final_speeds.push_back(s.future.speed.at(last));
    b.final_headings.push_back(s.future.heading.at(last));
  }
  return b;
}

MetricsReport evaluate(const model::ModelParams& params, std::span<const model::Sample> samples, std::size_t jobs) {
  return evaluate(predict_batch(params, samples, jobs));
}

}  // namespace vecprobe::eval
