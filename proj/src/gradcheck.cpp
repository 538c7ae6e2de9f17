#include "vecprobe/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vecprobe/error.hpp"

namespace vecprobe::grad {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

FiniteDifferenceReport finite_difference_check(const CheckedFunction& fn, std::span<const double> point, double h) {
  if (!(h > 0.0)) throw Error("finite_difference_check: step must be positive");
  const std::vector<double> analytic = fn.gradient(point);
  if (analytic.size() != point.size()) throw ShapeError("finite_difference_check: gradient length mismatch");

  const bool track_branches = static_cast<bool>(fn.branch_signature);
  const std::uint64_t base_signature = track_branches ? fn.branch_signature(point) : 0;

  FiniteDifferenceReport report;
  std::vector<double> probe(point.begin(), point.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double x0 = probe[i];
    probe[i] = x0 + h;
    const double f_plus = fn.value(probe);
    const bool plus_smooth = !track_branches || fn.branch_signature(probe) == base_signature;
    probe[i] = x0 - h;
    const double f_minus = fn.value(probe);
    const bool minus_smooth = !track_branches || fn.branch_signature(probe) == base_signature;
    probe[i] = x0;

    if (!plus_smooth || !minus_smooth) {
      ++report.skipped;
      continue;
    }
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double err = relative_error(analytic[i], numeric);
    ++report.checked;
    if (report.checked == 1 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace vecprobe::grad
