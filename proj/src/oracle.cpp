#include "vecprobe/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <quadmath.h>

#include "vecprobe/error.hpp"

namespace vecprobe::oracle {

eval::MetricsReport brute_force_metrics(std::span<const Trajectory> predictions, std::span<const Trajectory> truths,
                                        std::span<const std::vector<std::uint8_t>> masks,
                                        std::span<const double> speeds, std::span<const double> headings) {
  eval::MetricsReport r;
  const std::size_t n = predictions.size();
  r.case_count = n;
  if (n == 0) return r;
  double ade_total = 0.0, fde_total = 0.0;
  std::size_t misses = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    double count = 0.0;
    std::size_t last = 0;
    for (std::size_t t = 0; t < masks[i].size(); ++t) {
      if (masks[i][t] == 0) continue;
      const double dx = predictions[i][t].x - truths[i][t].x;
      const double dy = predictions[i][t].y - truths[i][t].y;
      sum += std::sqrt(dx * dx + dy * dy);
      count += 1.0;
      last = t;
    }
    ade_total += sum / count;

    const double dx = predictions[i][last].x - truths[i][last].x;
    const double dy = predictions[i][last].y - truths[i][last].y;
    fde_total += std::sqrt(dx * dx + dy * dy);

    // Project onto the unit heading and its left normal.
    const double ux = std::cos(headings[i]);
    const double uy = std::sin(headings[i]);
    const double along = std::abs(dx * ux + dy * uy);
    const double across = std::abs(-dx * uy + dy * ux);
    const double v = speeds[i];
    double lon = 2.0;
    if (v < 1.4) {
      lon = 1.0;
    } else if (v <= 11.0) {
      lon = 1.0 + (v - 1.4) / 9.6;
    }
    if (across > 1.0 || along > lon) ++misses;
  }
  r.min_ade = ade_total / static_cast<double>(n);
  r.min_fde = fde_total / static_cast<double>(n);
  r.miss_rate = static_cast<double>(misses) / static_cast<double>(n);
  return r;
}

}  // namespace vecprobe::oracle

namespace vecprobe::oracle {

namespace {

__extension__ typedef __float128 Quad;

long double sqrt_of(long double v) { return std::sqrt(v); }
long double exp_of(long double v) { return std::exp(v); }
Quad sqrt_of(Quad v) { return sqrtq(v); }
Quad exp_of(Quad v) { return expq(v); }

template <typename T>
class Reference {
 public:
  Reference(const model::ModelParams& params, const model::Sample& sample) : p_(params), s_(sample) {
    for (std::size_t g = 0; g < s_.graph.groups.size(); ++g) {
      std::vector<std::uint32_t> br;
      features_.push_back(encode(g, kNone, 0, &br));
      keys_.push_back(project(features_.back(), p_.key));
      values_.push_back(project(features_.back(), p_.value));
      branches_.push_back(std::move(br));
    }
    head_branches_.clear();
    base_loss_ = head(kNone, {}, &head_branches_);
  }

  T loss() const { return base_loss_; }

  // Loss with flat entry `index` set to `value`; `same` reports whether every
  // branch matched the unperturbed evaluation.
  T loss_at(std::size_t index, T value, bool* same) const {
    const std::size_t row = index / s_.graph.nodes.cols();
    const auto& groups = s_.graph.groups;
    std::size_t g = 0;
    while (row >= groups[g].first_row + groups[g].row_count) ++g;
    std::vector<std::uint32_t> br;
    const auto f = encode(g, index, value, &br);
    std::vector<std::uint32_t> hb;
    const T out = head(g, f, &hb);
    if (same) *same = br == branches_[g] && hb == head_branches_;
    return out;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<T> v;
  };

  static T cast(double d) { return static_cast<T>(d); }

  static std::vector<T> project(const std::vector<T>& f, const model::Linear& l) {
    const std::size_t out = l.weight.cols();
    std::vector<T> y(out);
    for (std::size_t j = 0; j < out; ++j) {
      T s = cast(l.bias[j]);
      for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * cast(l.weight.at(k, j));
      y[j] = s;
    }
    return y;
  }

  static std::vector<T> pool(const Mat& m, std::vector<std::uint32_t>* br) {
    std::vector<T> out(m.cols);
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::size_t best = 0;
      for (std::size_t r = 1; r < m.rows; ++r) {
        if (m.v[r * m.cols + c] > m.v[best * m.cols + c]) best = r;
      }
      out[c] = m.v[best * m.cols + c];
      br->push_back(static_cast<std::uint32_t>(best));
    }
    return out;
  }

  std::vector<T> encode(std::size_t group, std::size_t index, T value, std::vector<std::uint32_t>* br) const {
    const auto& grp = s_.graph.groups[group];
    const auto& nodes = s_.graph.nodes;
    const std::size_t width = nodes.cols();
    Mat x{grp.row_count, width, {}};
    for (std::size_t r = 0; r < grp.row_count; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        const std::size_t flat = (grp.first_row + r) * width + c;
        x.v.push_back(flat == index ? value : cast(nodes[flat]));
      }
    }
    const auto& layers = scene::is_trajectory(grp.kind) ? p_.trajectory.layers : p_.context.layers;
    for (const auto& layer : layers) {
      const std::size_t out = layer.weight.cols();
      Mat h{x.rows, out, std::vector<T>(x.rows * out)};
      for (std::size_t r = 0; r < x.rows; ++r) {
        T* hr = h.v.data() + r * out;
        for (std::size_t j = 0; j < out; ++j) hr[j] = cast(layer.bias[j]);
        for (std::size_t k = 0; k < x.cols; ++k) {
          const T xk = x.v[r * x.cols + k];
          for (std::size_t j = 0; j < out; ++j) hr[j] += xk * cast(layer.weight.at(k, j));
        }
        if (p_.config.layer_norm) {
          T mean = 0, var = 0;
          for (std::size_t j = 0; j < out; ++j) mean += hr[j];
          mean /= static_cast<T>(out);
          for (std::size_t j = 0; j < out; ++j) var += (hr[j] - mean) * (hr[j] - mean);
          var /= static_cast<T>(out);
          const T inv = T(1) / sqrt_of(var + cast(1e-5));
          for (std::size_t j = 0; j < out; ++j) hr[j] = (hr[j] - mean) * inv;
        }
        for (std::size_t j = 0; j < out; ++j) {
          br->push_back(hr[j] > 0 ? 1U : 0U);
          if (!(hr[j] > 0)) hr[j] = 0;
        }
      }
      const auto p = pool(h, br);
      Mat next{h.rows, 2 * out, {}};
      next.v.reserve(h.rows * 2 * out);
      for (std::size_t r = 0; r < h.rows; ++r) {
        next.v.insert(next.v.end(), h.v.begin() + static_cast<std::ptrdiff_t>(r * out),
                      h.v.begin() + static_cast<std::ptrdiff_t>((r + 1) * out));
        next.v.insert(next.v.end(), p.begin(), p.end());
      }
      x = std::move(next);
    }
    return pool(x, br);
  }

  // Attention, decoder and masked mse with group `changed` replaced by `f`.
  T head(std::size_t changed, const std::vector<T>& f, std::vector<std::uint32_t>* br) const {
    const std::size_t n = features_.size(), d = p_.config.hidden;
    std::vector<T> ck, cv;
    if (changed != kNone) {
      ck = project(f, p_.key);
      cv = project(f, p_.value);
    }
    const std::size_t tg = s_.graph.target_group;
    const auto q = project(tg == changed ? f : features_[tg], p_.query);
    std::vector<T> w(n);
    for (std::size_t g = 0; g < n; ++g) {
      const auto& k = g == changed ? ck : keys_[g];
      T s = 0;
      for (std::size_t j = 0; j < d; ++j) s += q[j] * k[j];
      w[g] = s / sqrt_of(static_cast<T>(d));
    }
    T mx = w[0];
    for (const T& s : w) mx = s > mx ? s : mx;
    T total = 0;
    for (T& s : w) total += (s = exp_of(s - mx));
    std::vector<T> ctx(d, T(0));
    for (std::size_t g = 0; g < n; ++g) {
      const auto& v = g == changed ? cv : values_[g];
      for (std::size_t j = 0; j < d; ++j) ctx[j] += w[g] / total * v[j];
    }
    auto hidden = project(ctx, p_.decoder_hidden);
    for (T& e : hidden) {
      br->push_back(e > 0 ? 1U : 0U);
      if (!(e > 0)) e = 0;
    }
    const auto pred = project(hidden, p_.decoder_out);
    const auto& mask = s_.future.mask;
    T sum = 0;
    std::size_t valid = 0;
    for (std::size_t t = 0; t < mask.size(); ++t) {
      if (!mask[t]) continue;
      ++valid;
      const T dx = pred[2 * t] - cast(s_.truth[2 * t]);
      const T dy = pred[2 * t + 1] - cast(s_.truth[2 * t + 1]);
      sum += dx * dx + dy * dy;
    }
    return sum / static_cast<T>(valid);
  }

  const model::ModelParams& p_;
  const model::Sample& s_;
  std::vector<std::vector<T>> features_, keys_, values_;
  std::vector<std::vector<std::uint32_t>> branches_;
  std::vector<std::uint32_t> head_branches_;
  T base_loss_ = 0;
};

template <typename T>
std::optional<double> central_difference(const Reference<T>& ref, std::size_t i, double x0, double h) {
  bool plus_same = false, minus_same = false;
  const T f_plus = ref.loss_at(i, static_cast<T>(x0) + static_cast<T>(h), &plus_same);
  const T f_minus = ref.loss_at(i, static_cast<T>(x0) - static_cast<T>(h), &minus_same);
  if (!plus_same || !minus_same) return std::nullopt;
  return static_cast<double>((f_plus - f_minus) / (T(2) * static_cast<T>(h)));
}

}  // namespace

long double reference_loss(const model::ModelParams& params, const model::Sample& sample) {
  return Reference<long double>(params, sample).loss();
}

grad::FiniteDifferenceReport reference_gradient_check(const model::ModelParams& params, const model::Sample& sample,
                                                      std::span<const double> analytic, double h,
                                                      double refine_above) {
  if (!(h > 0.0)) throw Error("reference_gradient_check: step must be positive");
  const auto& x = sample.graph.nodes;
  if (analytic.size() != x.size()) throw ShapeError("reference_gradient_check: gradient length mismatch");
  const Reference<long double> ref(params, sample);
  std::optional<Reference<Quad>> fine;
  grad::FiniteDifferenceReport report;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto numeric = central_difference(ref, i, x[i], h);
    if (numeric && grad::relative_error(analytic[i], *numeric) > refine_above) {
      if (!fine) fine.emplace(params, sample);
      numeric = central_difference(*fine, i, x[i], h);
    }
    if (!numeric) {
      ++report.skipped;
      continue;
    }
    const double err = grad::relative_error(analytic[i], *numeric);
    ++report.checked;
    if (report.checked == 1 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = *numeric;
    }
  }
  return report;
}

}  // namespace vecprobe::oracle
