#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "vecprobe/error.hpp"
#include "vecprobe/grad.hpp"
#include "vecprobe/gradcheck.hpp"

using namespace vecprobe;
using namespace vecprobe::grad;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.data()) v = g(rng);
  return t;
}

// Builds a scalar from a single input leaf of the given shape.
using Builder = std::function<Var(Tape&, Var)>;

CheckedFunction checked(std::size_t rows, std::size_t cols, Builder build) {
  auto run = [=](std::span<const double> x, Tape& tape) {
    Var in = tape.leaf(Tensor({rows, cols}, std::vector<double>(x.begin(), x.end())));
    return std::pair{in, build(tape, in)};
  };
  CheckedFunction f;
  f.value = [=](std::span<const double> x) {
    Tape t;
    return run(x, t).second.value()[0];
  };
  f.gradient = [=](std::span<const double> x) {
    Tape t;
    auto [in, out] = run(x, t);
    t.backward(out);
    return t.grad(in).data();
  };
  f.branch_signature = [=](std::span<const double> x) {
    Tape t;
    run(x, t);
    return t.branch_signature();
  };
  return f;
}

// Sum of rows of x * w with distinct weights per column.
Var reduce(Tape& tape, Var x) {
  const Tensor& v = x.value();
  Tensor w = Tensor::matrix(v.cols(), 1);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.7 * i);
  Var proj = affine(x, tape.leaf(w), tape.leaf(Tensor::matrix(1, 1)));
  return affine(tape.leaf(Tensor::matrix(1, v.rows(), 1.0)), proj, tape.leaf(Tensor::matrix(1, 1)));
}

}  // namespace

TEST(Ops, ReluValues) {
  Tape t;
  Var x = t.leaf(Tensor::row_vector({-1, 2}));
  EXPECT_EQ(relu(x).value(), Tensor::row_vector({0, 2}));
}

TEST(Ops, MaxPoolValuesAndTieRule) {
  Tape t;
  Var x = t.leaf(Tensor::from_rows({{1, 5}, {3, 2}}));
  EXPECT_EQ(max_pool_rows(x).value(), Tensor::row_vector({3, 5}));

  Tape tie;
  Var y = tie.leaf(Tensor::from_rows({{1}, {1}}));
  Var p = max_pool_rows(y);
  tie.backward(p);
  EXPECT_EQ(tie.grad(y), Tensor::from_rows({{1}, {0}}));
}

TEST(Ops, MseIdentityAndMask) {
  Tape t;
  const Tensor truth = Tensor::row_vector({1, 2, 3, 4});
  const std::vector<std::uint8_t> both{1, 1}, first{1, 0};
  EXPECT_DOUBLE_EQ(mse(t.leaf(truth), truth, both).value()[0], 0.0);
  Var off = t.leaf(Tensor::row_vector({4, 6, 100, 100}));
  EXPECT_DOUBLE_EQ(mse(off, truth, first).value()[0], 25.0);
  const std::vector<std::uint8_t> none{0, 0};
  EXPECT_THROW(mse(off, truth, none), Error);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(2);
  Tape t;
  Var s = softmax(t.leaf(random_tensor(4, 6, rng, 5.0)));
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0;
    for (double v : s.value().row(r)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-14);
  }
}

TEST(Ops, LayerNormStandardizesRows) {
  std::mt19937_64 rng(5);
  Tape t;
  Var y = layer_norm(t.leaf(random_tensor(3, 8, rng, 3.0)));
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (double x : y.value().row(r)) m += x / 8;
    for (double x : y.value().row(r)) v += (x - m) * (x - m) / 8;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-5);
  }
}

TEST(Ops, ConcatBroadcastsSingleRow) {
  Tape t;
  Var a = t.leaf(Tensor::from_rows({{1}, {2}, {3}}));
  Var b = t.leaf(Tensor::row_vector({9, 8}));
  Var c = concat(a, b);
  EXPECT_EQ(c.value(), Tensor::from_rows({{1, 9, 8}, {2, 9, 8}, {3, 9, 8}}));
  // The gradient of b accumulates over the three broadcast copies.
  Var s = affine(c, t.leaf(Tensor::matrix(3, 1, 1.0)), t.leaf(Tensor::matrix(1, 1)));
  t.backward(affine(t.leaf(Tensor::matrix(1, 3, 1.0)), s, t.leaf(Tensor::matrix(1, 1))));
  EXPECT_EQ(t.grad(b), Tensor::row_vector({3, 3}));
}

TEST(Tape, LinearInputGradientIsExact) {
  Tape t;
  const Tensor w = Tensor::from_rows({{0.5}, {-2}, {3.25}});
  Var x = t.leaf(Tensor::row_vector({1, 2, 3}));
  Var f = affine(x, t.leaf(w), t.leaf(Tensor::scalar(0.0)));
  const auto g = gradients(t, f, std::vector<Var>{x});
  EXPECT_EQ(g[0], Tensor::row_vector({0.5, -2, 3.25}));
}

TEST(Tape, SeedChecks) {
  Tape t;
  Var x = t.leaf(Tensor::row_vector({1, 2}));
  EXPECT_THROW(t.backward(x), ShapeError);
  Tape other;
  Var y = other.leaf(Tensor::scalar(1));
  EXPECT_THROW(t.backward(y), Error);
}

TEST(Tape, NonFiniteValuesThrow) {
  Tape t;
  Var x = t.leaf(Tensor::row_vector({1e308, 1e308}));
  EXPECT_THROW(scale(x, 10.0), NumericError);
  EXPECT_THROW(t.leaf(Tensor::row_vector({std::numeric_limits<double>::quiet_NaN()})), NumericError);
}

TEST(Tape, ReplayIsBitIdentical) {
  std::mt19937_64 rng(9);
  Tape t;
  Var x = t.leaf(random_tensor(5, 4, rng));
  Var h = relu(affine(x, t.leaf(random_tensor(4, 6, rng)), t.leaf(random_tensor(1, 6, rng))));
  Var y = scaled_dot_attention(slice_rows(h, 0, 1), h, layer_norm(h));
  (void)y;
  EXPECT_TRUE(t.replay_matches());
  t.set_leaf(x, random_tensor(5, 4, rng));
  EXPECT_FALSE(t.replay_matches());
  t.replay();
  EXPECT_TRUE(t.replay_matches());
}

TEST(GradCheck, QuadraticIsExact) {
  CheckedFunction f;
  f.value = [](std::span<const double> x) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (i + 1.0) * x[i] * x[i] + x[i];
    return s;
  };
  f.gradient = [](std::span<const double> x) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * (i + 1.0) * x[i] + 1.0;
    return g;
  };
  const std::vector<double> p{0.3, -1.2, 2.5, 0.01};
  EXPECT_LE(finite_difference_check(f, p, 1e-5).max_relative_error, 1e-9);
  EXPECT_THROW(finite_difference_check(f, p, 0.0), Error);
}

TEST(GradCheck, ReluKinkIsReportedNotHidden) {
  auto f = checked(1, 1, [](Tape&, Var x) { return relu(x); });
  f.branch_signature = nullptr;
  const std::vector<double> at_kink{0.0};
  EXPECT_GT(finite_difference_check(f, at_kink, 1e-5).max_relative_error, 0.1);

  auto guarded = checked(1, 1, [](Tape&, Var x) { return relu(x); });
  const auto r = finite_difference_check(guarded, at_kink, 1e-5);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.checked, 0u);
}

TEST(GradCheck, RandomTwoLayerNet) {
  std::mt19937_64 rng(21);
  const Tensor w1 = random_tensor(3, 8, rng), b1 = random_tensor(1, 8, rng);
  const Tensor w2 = random_tensor(8, 2, rng), b2 = random_tensor(1, 2, rng);
  const Tensor truth = random_tensor(1, 2, rng);
  auto f = checked(1, 3, [&](Tape& t, Var x) {
    Var h = relu(affine(x, t.leaf(w1), t.leaf(b1)));
    const std::vector<std::uint8_t> mask{1};
    return mse(affine(h, t.leaf(w2), t.leaf(b2)), truth, mask);
  });
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor(1, 3, rng);
    const auto r = finite_difference_check(f, x.data(), 1e-5);
    EXPECT_LE(r.max_relative_error, 1e-5) << "trial " << trial << " index " << r.worst_index;
  }
}

TEST(GradCheck, EachOpAgainstFiniteDifferences) {
  std::mt19937_64 rng(33);
  const Tensor w = random_tensor(4, 4, rng), b = random_tensor(1, 4, rng);
  const Tensor truth = random_tensor(1, 8, rng);
  const std::vector<Builder> builders{
      [&](Tape& t, Var x) { return reduce(t, layer_norm(x)); },
      [&](Tape& t, Var x) { return reduce(t, softmax(x)); },
      [&](Tape& t, Var x) { return reduce(t, concat(x, max_pool_rows(x))); },
      [&](Tape& t, Var x) {
        Var rows = stack_rows(std::vector<Var>{slice_rows(x, 2, 1), slice_rows(x, 0, 1)});
        return reduce(t, relu(affine(rows, t.leaf(w), t.leaf(b))));
      },
      [&](Tape& t, Var x) {
        Var q = affine(slice_rows(x, 0, 1), t.leaf(w), t.leaf(b));
        return reduce(t, scaled_dot_attention(q, x, affine(x, t.leaf(w), t.leaf(b))));
      },
      [&](Tape&, Var x) {
        const std::vector<std::uint8_t> mask{1, 1, 0, 1};
        Var two = concat(slice_rows(x, 1, 1), slice_rows(x, 2, 1));
        return mse(scale(two, 0.7), truth, mask);
      },
  };
  for (std::size_t i = 0; i < builders.size(); ++i) {
    auto f = checked(3, 4, builders[i]);
    const Tensor x = random_tensor(3, 4, rng);
    const auto r = finite_difference_check(f, x.data(), 1e-5);
    EXPECT_LE(r.max_relative_error, 1e-5) << "builder " << i << " index " << r.worst_index << " analytic "
                                          << r.worst_analytic << " numeric " << r.worst_numeric;
    EXPECT_GT(r.checked, 0u);
  }
}
