#include <algorithm>
#include <cmath>
#include <limits>

#include "vecprobe/error.hpp"
#include "vecprobe/grad.hpp"

namespace vecprobe::grad {
namespace {

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* tape = vars.begin()->tape;
  for (const Var& v : vars) {
    if (v.tape == nullptr || v.tape != tape || !tape->owns(v)) {
      throw Error("operands must belong to the same tape");
    }
  }
  return *tape;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// ---- affine ----

Tensor affine_value(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t n = x.rows(), in = x.cols(), out = w.cols();
  Tensor y = Tensor::matrix(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    double* yr = y.row(i).data();
    for (std::size_t j = 0; j < out; ++j) yr[j] = b[j];
    const double* xr = x.row(i).data();
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      const double* wr = w.row(k).data();
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
  return y;
}

// ---- relu ----

Tensor relu_value(const Tensor& x, std::vector<std::uint32_t>* mask) {
  Tensor y = x;
  if (mask) mask->assign((x.size() + 31) / 32, 0U);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > 0.0) {
      if (mask) (*mask)[i / 32] |= 1U << (i % 32);
    } else {
      y[i] = 0.0;
    }
  }
  return y;
}

// ---- layer norm ----

Tensor layer_norm_value(const Tensor& x, double eps, std::vector<double>* inv_std) {
  const std::size_t n = x.rows(), c = x.cols();
  Tensor y = Tensor::matrix(n, c);
  if (inv_std) inv_std->assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xr = x.row(i);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    if (inv_std) (*inv_std)[i] = is;
    auto yr = y.row(i);
    for (std::size_t j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * is;
  }
  return y;
}

// ---- max pool ----

Tensor max_pool_value(const Tensor& x, std::vector<std::uint32_t>* argmax) {
  const std::size_t n = x.rows(), c = x.cols();
  Tensor y = Tensor::matrix(1, c);
  std::vector<std::uint32_t> arg(c, 0U);
  for (std::size_t j = 0; j < c; ++j) {
    double best = x.at(0, j);
    for (std::size_t i = 1; i < n; ++i) {
      if (x.at(i, j) > best) {
        best = x.at(i, j);
        arg[j] = static_cast<std::uint32_t>(i);
      }
    }
    y[j] = best;
  }
  if (argmax) *argmax = std::move(arg);
  return y;
}

// ---- concat ----

Tensor concat_value(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
  const bool broadcast = b.rows() == 1 && n > 1;
  Tensor y = Tensor::matrix(n, ca + cb);
  for (std::size_t i = 0; i < n; ++i) {
    auto yr = y.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), yr.begin());
    const auto br = b.row(broadcast ? 0 : i);
    std::copy(br.begin(), br.end(), yr.begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return y;
}

// ---- softmax ----

Tensor softmax_value(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : r) v /= sum;
  }
  return y;
}

void softmax_backward_rows(const Tensor& y, const Tensor& gy, Tensor& gx) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto yr = y.row(i);
    const auto gr = gy.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
    auto out = gx.row(i);
    for (std::size_t j = 0; j < yr.size(); ++j) out[j] += yr[j] * (gr[j] - dot);
  }
}

// ---- attention ----

// Returns the weights matrix (rows(q) x rows(k)).
Tensor attention_weights(const Tensor& q, const Tensor& k) {
  const std::size_t m = q.rows(), n = k.rows(), d = q.cols();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor scores = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += q.at(i, t) * k.at(j, t);
      scores.at(i, j) = s * inv;
    }
  }
  return softmax_value(scores);
}

Tensor attention_output(const Tensor& w, const Tensor& v) {
  const std::size_t m = w.rows(), n = w.cols(), dv = v.cols();
  Tensor y = Tensor::matrix(m, dv);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double wij = w.at(i, j);
      for (std::size_t t = 0; t < dv; ++t) y.at(i, t) += wij * v.at(j, t);
    }
  }
  return y;
}

// ---- mse ----

double mse_value(const Tensor& pred, const Tensor& truth, std::span<const std::uint8_t> mask,
                 std::size_t valid) {
  double sum = 0.0;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (!mask[t]) continue;
    const double dx = pred[2 * t] - truth[2 * t];
    const double dy = pred[2 * t + 1] - truth[2 * t + 1];
    sum += dx * dx + dy * dy;
  }
  return sum / static_cast<double>(valid);
}

}  // namespace

Var affine(Var x, Var w, Var b) {
  Tape& tape = tape_of({x, w, b});
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require(xv.cols() == wv.rows(), "affine: x " + xv.shape_string() + " vs W " + wv.shape_string());
  require(bv.size() == wv.cols(), "affine: bias " + bv.shape_string() + " vs W " + wv.shape_string());

  const std::size_t xi = x.index, wi = w.index, bi = b.index;
  return tape.record(
      "affine", affine_value(xv, wv, bv),
      [xi, wi, bi](const Tape& t) { return affine_value(t.value(xi), t.value(wi), t.value(bi)); },
      [xi, wi, bi](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(xi);
        const Tensor& wv = t.value(wi);
        const std::size_t n = xv.rows(), in = xv.cols(), out = wv.cols();
        {
          Tensor& gx = t.grad_accumulator(xi);
          for (std::size_t i = 0; i < n; ++i) {
            const double* gr = g.row(i).data();
            double* gxr = gx.row(i).data();
            for (std::size_t k = 0; k < in; ++k) {
              const double* wr = wv.row(k).data();
              double s = 0.0;
              for (std::size_t j = 0; j < out; ++j) s += gr[j] * wr[j];
              gxr[k] += s;
            }
          }
        }
        {
          Tensor& gw = t.grad_accumulator(wi);
          for (std::size_t i = 0; i < n; ++i) {
            const double* gr = g.row(i).data();
            const double* xr = xv.row(i).data();
            for (std::size_t k = 0; k < in; ++k) {
              const double xk = xr[k];
              if (xk == 0.0) continue;
              double* gwr = gw.row(k).data();
              for (std::size_t j = 0; j < out; ++j) gwr[j] += xk * gr[j];
            }
          }
        }
        {
          Tensor& gb = t.grad_accumulator(bi);
          for (std::size_t i = 0; i < n; ++i) {
            const double* gr = g.row(i).data();
            for (std::size_t j = 0; j < out; ++j) gb[j] += gr[j];
          }
        }
      });
}

Var relu(Var x) {
  Tape& tape = tape_of({x});
  std::vector<std::uint32_t> mask;
  Tensor y = relu_value(x.value(), &mask);
  const std::size_t xi = x.index;
  return tape.record(
      "relu", std::move(y), [xi](const Tape& t) { return relu_value(t.value(xi), nullptr); },
      [xi](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(xi);
        Tensor& gx = t.grad_accumulator(xi);
        for (std::size_t i = 0; i < xv.size(); ++i) {
          if (xv[i] > 0.0) gx[i] += g[i];
        }
      },
      std::move(mask));
}

Var layer_norm(Var x, double eps) {
  Tape& tape = tape_of({x});
  require(x.value().cols() >= 1, "layer_norm: empty row");
  const std::size_t xi = x.index;
  const std::size_t yi = tape.size();
  return tape.record(
      "layer_norm", layer_norm_value(x.value(), eps, nullptr),
      [xi, eps](const Tape& t) { return layer_norm_value(t.value(xi), eps, nullptr); },
      [xi, yi, eps](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(xi);
        std::vector<double> inv_std;
        layer_norm_value(xv, eps, &inv_std);
        const Tensor& yv = t.value(yi);
        const std::size_t c = xv.cols();
        Tensor& gx = t.grad_accumulator(xi);
        for (std::size_t i = 0; i < xv.rows(); ++i) {
          const auto gr = g.row(i);
          const auto yr = yv.row(i);
          double mean_g = 0.0;
          double mean_gy = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            mean_g += gr[j];
            mean_gy += gr[j] * yr[j];
          }
          mean_g /= static_cast<double>(c);
          mean_gy /= static_cast<double>(c);
          auto out = gx.row(i);
          for (std::size_t j = 0; j < c; ++j) out[j] += inv_std[i] * (gr[j] - mean_g - yr[j] * mean_gy);
        }
      });
}

Var max_pool_rows(Var x) {
  Tape& tape = tape_of({x});
  if (x.value().rows() == 0 || x.value().size() == 0) throw ShapeError("max_pool_rows: empty row set");
  std::vector<std::uint32_t> argmax;
  Tensor y = max_pool_value(x.value(), &argmax);
  const std::size_t xi = x.index;
  return tape.record(
      "max_pool_rows", std::move(y), [xi](const Tape& t) { return max_pool_value(t.value(xi), nullptr); },
      [xi, argmax](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_accumulator(xi);
        for (std::size_t j = 0; j < argmax.size(); ++j) gx.at(argmax[j], j) += g[j];
      },
      argmax);
}

Var concat(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(bv.rows() == av.rows() || bv.rows() == 1,
          "concat: rows " + av.shape_string() + " vs " + bv.shape_string());
  const std::size_t ai = a.index, bi = b.index;
  return tape.record(
      "concat", concat_value(av, bv),
      [ai, bi](const Tape& t) { return concat_value(t.value(ai), t.value(bi)); },
      [ai, bi](Tape& t, const Tensor& g) {
        const std::size_t ca = t.value(ai).cols();
        const std::size_t cb = t.value(bi).cols();
        const bool broadcast = t.value(bi).rows() == 1 && t.value(ai).rows() > 1;
        {
          Tensor& ga = t.grad_accumulator(ai);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
          }
        }
        Tensor& gb = t.grad_accumulator(bi);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const std::size_t bi_row = broadcast ? 0 : i;
          for (std::size_t j = 0; j < cb; ++j) gb.at(bi_row, j) += g.at(i, ca + j);
        }
      });
}

Var softmax(Var x) {
  Tape& tape = tape_of({x});
  const std::size_t xi = x.index;
  const std::size_t yi = tape.size();
  return tape.record(
      "softmax", softmax_value(x.value()), [xi](const Tape& t) { return softmax_value(t.value(xi)); },
      [xi, yi](Tape& t, const Tensor& g) { softmax_backward_rows(t.value(yi), g, t.grad_accumulator(xi)); });
}

Var scaled_dot_attention(Var q, Var k, Var v, Tensor* weights_out) {
  Tape& tape = tape_of({q, k, v});
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require(qv.cols() == kv.cols(), "attention: query/key width mismatch");
  require(kv.rows() == vv.rows(), "attention: key/value count mismatch");
  Tensor w = attention_weights(qv, kv);
  if (weights_out) *weights_out = w;
  Tensor y = attention_output(w, vv);

  const std::size_t qi = q.index, ki = k.index, vi = v.index;
  return tape.record(
      "scaled_dot_attention", std::move(y),
      [qi, ki, vi](const Tape& t) {
        return attention_output(attention_weights(t.value(qi), t.value(ki)), t.value(vi));
      },
      [qi, ki, vi](Tape& t, const Tensor& g) {
        const Tensor& qv = t.value(qi);
        const Tensor& kv = t.value(ki);
        const Tensor& vv = t.value(vi);
        const Tensor w = attention_weights(qv, kv);
        const std::size_t m = qv.rows(), n = kv.rows(), d = qv.cols(), dv = vv.cols();
        // dV = W^T g ; dW = g V^T
        Tensor gw = Tensor::matrix(m, n);
        {
          Tensor& gv = t.grad_accumulator(vi);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              double s = 0.0;
              for (std::size_t c = 0; c < dv; ++c) {
                gv.at(j, c) += w.at(i, j) * g.at(i, c);
                s += g.at(i, c) * vv.at(j, c);
              }
              gw.at(i, j) = s;
            }
          }
        }
        Tensor gs = Tensor::matrix(m, n);
        softmax_backward_rows(w, gw, gs);
        const double inv = 1.0 / std::sqrt(static_cast<double>(d));
        {
          Tensor& gq = t.grad_accumulator(qi);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const double s = gs.at(i, j) * inv;
              for (std::size_t c = 0; c < d; ++c) gq.at(i, c) += s * kv.at(j, c);
            }
          }
        }
        Tensor& gk = t.grad_accumulator(ki);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double s = gs.at(i, j) * inv;
            for (std::size_t c = 0; c < d; ++c) gk.at(j, c) += s * qv.at(i, c);
          }
        }
      });
}

Var mse(Var pred, const Tensor& truth, std::span<const std::uint8_t> mask) {
  Tape& tape = tape_of({pred});
  const Tensor& pv = pred.value();
  require(pv.size() == truth.size(), "mse: prediction " + pv.shape_string() + " vs truth " + truth.shape_string());
  require(pv.size() == 2 * mask.size(), "mse: mask length does not match frame count");
  std::size_t valid = 0;
  for (std::uint8_t m : mask) valid += m ? 1 : 0;
  if (valid == 0) throw ShapeError("mse: mask has no valid frames");

  const std::size_t pi = pred.index;
  std::vector<std::uint8_t> mask_copy(mask.begin(), mask.end());
  return tape.record(
      "mse", Tensor::scalar(mse_value(pv, truth, mask, valid)),
      [pi, truth, mask_copy, valid](const Tape& t) {
        return Tensor::scalar(mse_value(t.value(pi), truth, mask_copy, valid));
      },
      [pi, truth, mask_copy, valid](Tape& t, const Tensor& g) {
        const Tensor& pv = t.value(pi);
        Tensor& gp = t.grad_accumulator(pi);
        const double s = 2.0 * g[0] / static_cast<double>(valid);
        for (std::size_t f = 0; f < mask_copy.size(); ++f) {
          if (!mask_copy[f]) continue;
          gp[2 * f] += s * (pv[2 * f] - truth[2 * f]);
          gp[2 * f + 1] += s * (pv[2 * f + 1] - truth[2 * f + 1]);
        }
      });
}

Var scale(Var x, double factor) {
  Tape& tape = tape_of({x});
  auto compute = [factor](const Tensor& v) {
    Tensor y = v;
    for (double& e : y.data()) e *= factor;
    return y;
  };
  const std::size_t xi = x.index;
  return tape.record(
      "scale", compute(x.value()), [xi, compute](const Tape& t) { return compute(t.value(xi)); },
      [xi, factor](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_accumulator(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
      });
}

Var slice_rows(Var x, std::size_t first, std::size_t count) {
  Tape& tape = tape_of({x});
  const Tensor& xv = x.value();
  require(count >= 1 && first + count <= xv.rows(), "slice_rows: range outside " + xv.shape_string());
  auto compute = [first, count](const Tensor& v) {
    const std::size_t c = v.cols();
    std::vector<double> data(v.data().begin() + static_cast<std::ptrdiff_t>(first * c),
                             v.data().begin() + static_cast<std::ptrdiff_t>((first + count) * c));
    return Tensor({count, c}, std::move(data));
  };
  const std::size_t xi = x.index;
  return tape.record(
      "slice_rows", compute(xv), [xi, compute](const Tape& t) { return compute(t.value(xi)); },
      [xi, first](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_accumulator(xi);
        const std::size_t offset = first * gx.cols();
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
      });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  Tape& tape = *rows.front().tape;
  std::vector<std::size_t> idx;
  idx.reserve(rows.size());
  const std::size_t c = rows.front().value().size();
  for (const Var& r : rows) {
    if (r.tape != &tape || !tape.owns(r)) throw Error("operands must belong to the same tape");
    require(r.value().size() == c, "stack_rows: width mismatch");
    idx.push_back(r.index);
  }
  auto compute = [idx, c](const Tape& t) {
    Tensor y = Tensor::matrix(idx.size(), c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& src = t.value(idx[i]).data();
      std::copy(src.begin(), src.end(), y.row(i).begin());
    }
    return y;
  };
  return tape.record("stack_rows", compute(tape), compute, [idx, c](Tape& t, const Tensor& g) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Tensor& gr = t.grad_accumulator(idx[i]);
      for (std::size_t j = 0; j < c; ++j) gr[j] += g.at(i, j);
    }
  });
}

}  // namespace vecprobe::grad
