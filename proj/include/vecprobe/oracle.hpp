#pragma once

// Straight-line reference implementations used to cross-check the metric and
// geometry code. Nothing here calls into the evaluation module.

#include <cstdint>
#include <span>
#include <vector>

#include "vecprobe/evaluation.hpp"
#include "vecprobe/geometry.hpp"
#include "vecprobe/gradcheck.hpp"
#include "vecprobe/model.hpp"
#include "vecprobe/train.hpp"

namespace vecprobe::oracle {

eval::MetricsReport brute_force_metrics(std::span<const Trajectory> predictions, std::span<const Trajectory> truths,
                                        std::span<const std::vector<std::uint8_t>> masks,
                                        std::span<const double> speeds, std::span<const double> headings);

// Masked mse of the predictor recomputed in long double with plain loops,
// no tape.
long double reference_loss(const model::ModelParams& params, const model::Sample& sample);

// Central differences of the reference loss against `analytic`
// (d mse / d nodes, flat). Differencing runs in long double; coordinates
// that land within 10x of `refine_above` are redone in binary128, since
// long double still leaves ~1e-13 absolute noise at h = 1e-5 on losses near
// 100. Coordinates whose +/-h probes take a different relu or argmax branch
// than the base point are skipped.
grad::FiniteDifferenceReport reference_gradient_check(const model::ModelParams& params, const model::Sample& sample,
                                                      std::span<const double> analytic, double h,
                                                      double refine_above = 1e-6);

}  // namespace vecprobe::oracle
