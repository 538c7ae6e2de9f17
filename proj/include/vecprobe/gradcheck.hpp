#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace vecprobe::grad {

// A scalar function with an analytic gradient, as seen by the checker.
struct CheckedFunction {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
  // Optional. When set, coordinates whose +/-h probes change the signature
  // (a relu kink or max-pool switch lies inside the stencil) are skipped and
  // counted in FiniteDifferenceReport::skipped.
  std::function<std::uint64_t(std::span<const double>)> branch_signature;
};

struct FiniteDifferenceReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Central differences per coordinate against fn.gradient(point).
FiniteDifferenceReport finite_difference_check(const CheckedFunction& fn, std::span<const double> point, double h);

}  // namespace vecprobe::grad
