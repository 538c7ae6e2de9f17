#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "support.hpp"
#include "vecprobe/error.hpp"
#include "vecprobe/gradcheck.hpp"
#include "vecprobe/ingest.hpp"
#include "vecprobe/model.hpp"
#include "vecprobe/oracle.hpp"
#include "vecprobe/synth.hpp"
#include "vecprobe/train.hpp"

using namespace vecprobe;
using grad::Tape;
using grad::Tensor;
using grad::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.data()) v = g(rng);
  return t;
}

model::LinearVars linear(Tape& t, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {t.leaf(random_tensor(in, out, rng)), t.leaf(random_tensor(1, out, rng))};
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  Tensor out = x;
  for (std::size_t r = 0; r < perm.size(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) = x.at(perm[r], c);
  }
  return out;
}

std::vector<model::Sample> straight_samples(int segments, std::uint64_t seed) {
  synth::SynthSpec spec;
  spec.segment_count = segments;
  spec.agent_count = 2;
  spec.duration = 40;
  spec.speed_min = 4;
  spec.speed_max = 8;
  spec.seed = seed;
  const auto scene = synth::generate(spec);
  const auto cases = ingest::build_cases(scene.tracks, scene.map, {10, 30, 40});
  return model::make_samples(cases, scene::FeatureSchema());
}

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.hidden = 16;
  c.layers = 2;
  return c;
}

}  // namespace

TEST(Subgraph, SingleNodeConcatenatesItsOwnEncoding) {
  std::mt19937_64 rng(1);
  Tape t;
  const auto layer = linear(t, 16, 8, rng);
  Var out = model::subgraph_layer(layer, t.leaf(random_tensor(1, 16, rng)), true);
  ASSERT_EQ(out.value().cols(), 16u);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out.value().at(0, c), out.value().at(0, c + 8));
}

TEST(Subgraph, IdenticalNodesGiveIdenticalRows) {
  std::mt19937_64 rng(2);
  Tape t;
  const auto layer = linear(t, 16, 8, rng);
  const Tensor row = random_tensor(1, 16, rng);
  Tensor two = Tensor::matrix(2, 16);
  for (std::size_t c = 0; c < 16; ++c) two.at(0, c) = two.at(1, c) = row[c];
  const Tensor out = model::subgraph_layer(layer, t.leaf(two), true).value();
  for (std::size_t c = 0; c < out.cols(); ++c) EXPECT_EQ(out.at(0, c), out.at(1, c));
}

TEST(Subgraph, PermutationEquivariant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tape t;
    const auto layer = linear(t, 16, 8, rng);
    const Tensor x = random_tensor(5, 16, rng);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor a = model::subgraph_layer(layer, t.leaf(x), true).value();
    const Tensor b = model::subgraph_layer(layer, t.leaf(permute_rows(x, perm)), true).value();
    EXPECT_EQ(b, permute_rows(a, perm));
  }
}

TEST(Encoder, PermutationInvariantAndPoolIdempotent) {
  std::mt19937_64 rng(4);
  Tape t;
  const std::vector<model::LinearVars> stack{linear(t, 16, 8, rng), linear(t, 16, 8, rng), linear(t, 16, 8, rng)};
  const Tensor x = random_tensor(6, 16, rng);
  std::vector<std::size_t> perm{3, 1, 5, 0, 2, 4};
  const Tensor a = model::encode_polyline(stack, t.leaf(x), true).value();
  EXPECT_EQ(model::encode_polyline(stack, t.leaf(permute_rows(x, perm)), true).value(), a);
  EXPECT_EQ(a.cols(), 16u);

  Tensor dup = Tensor::matrix(7, 16);
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 16; ++c) dup.at(r, c) = x.at(r == 6 ? 2 : r, c);
  }
  EXPECT_EQ(model::encode_polyline(stack, t.leaf(dup), true).value(), a);
}

TEST(Encoder, SingleNodePoolIsLastLayerRow) {
  std::mt19937_64 rng(5);
  Tape t;
  const std::vector<model::LinearVars> stack{linear(t, 16, 8, rng), linear(t, 16, 8, rng)};
  Var x = t.leaf(random_tensor(1, 16, rng));
  Var h = x;
  for (const auto& l : stack) h = model::subgraph_layer(l, h, false);
  EXPECT_EQ(model::encode_polyline(stack, x, false).value(), h.value());
}

TEST(Global, SinglePolylineReturnsItsValueProjection) {
  std::mt19937_64 rng(6);
  Tape t;
  const auto q = linear(t, 8, 8, rng), k = linear(t, 8, 8, rng), v = linear(t, 8, 8, rng);
  Var f = t.leaf(random_tensor(1, 8, rng));
  Tensor w;
  const Tensor out = model::global_interaction(f, 0, q, k, v, &w).value();
  const Tensor proj = grad::affine(f, v.weight, v.bias).value();
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out[c], proj[c], 1e-15);
  EXPECT_DOUBLE_EQ(w[0], 1.0);
}

TEST(Global, AttentionWeightsSymmetricAndNormalized) {
  std::mt19937_64 rng(7);
  Tape t;
  const auto q = linear(t, 8, 8, rng), k = linear(t, 8, 8, rng), v = linear(t, 8, 8, rng);
  Tensor feats = random_tensor(4, 8, rng);
  for (std::size_t c = 0; c < 8; ++c) feats.at(3, c) = feats.at(2, c);
  Tensor w;
  model::global_interaction(t.leaf(feats), 0, q, k, v, &w);
  EXPECT_EQ(w[2], w[3]);
  for (int trial = 0; trial < 10; ++trial) {
    model::global_interaction(t.leaf(random_tensor(5, 8, rng)), 1, q, k, v, &w);
    EXPECT_NEAR(std::accumulate(w.data().begin(), w.data().end(), 0.0), 1.0, 1e-14);
  }
}

TEST(Predictor, ZeroDecoderPredictsOrigin) {
  auto params = model::init_params(model::ModelConfig{}, 3);
  for (auto* t : {&params.decoder_out.weight, &params.decoder_out.bias}) std::fill(t->data().begin(), t->data().end(), 0.0);
  const auto s = model::make_sample(fixture::simple_case(2, 3), scene::FeatureSchema());
  for (const Vec2& p : model::predict(params, s.graph)) EXPECT_EQ(p, (Vec2{0, 0}));
}

TEST(Predictor, DeterministicAndShaped) {
  const auto params = model::init_params(model::ModelConfig{}, 4);
  const auto s = model::make_sample(fixture::simple_case(2, 3), scene::FeatureSchema());
  const auto a = model::predict(params, s.graph);
  EXPECT_EQ(a, model::predict(params, s.graph));
  EXPECT_EQ(a.size(), 30u);
}

TEST(Predictor, InputGradientMatchesFiniteDifferences) {
  const auto params = model::init_params(small_config(), 5);
  const auto s = model::make_sample(fixture::simple_case(1, 2, 30, 8), scene::FeatureSchema());
  auto fp = model::forward(params, s.graph);
  Var loss = grad::mse(fp.prediction, s.truth, s.future.mask);
  fp.tape.backward(loss);
  EXPECT_NEAR(static_cast<double>(oracle::reference_loss(params, s)), loss.value()[0], 1e-12 * loss.value()[0]);
  const auto r = oracle::reference_gradient_check(params, s, fp.tape.grad(fp.input).data(), 1e-5);
  EXPECT_LE(r.max_relative_error, 1e-5) << "index " << r.worst_index << " a " << r.worst_analytic << " n "
                                        << r.worst_numeric;
  EXPECT_GT(r.checked, r.skipped);
}

TEST(Predictor, RejectsWrongWidth) {
  const auto params = model::init_params(small_config(), 5);
  auto s = model::make_sample(fixture::simple_case(1, 1), scene::FeatureSchema());
  EXPECT_THROW(model::forward(params, s.graph, Tensor::matrix(s.graph.node_count(), 15)), ShapeError);
}

TEST(Schedule, PaperDefaultsAndDecay) {
  const model::TrainConfig c;
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_DOUBLE_EQ(c.initial_lr, 0.001);
  EXPECT_DOUBLE_EQ(c.lr_decay_factor, 0.3);
  EXPECT_EQ(c.decay_every_epochs, 5);
  EXPECT_DOUBLE_EQ(model::learning_rate_at(c, 1), 1e-3);
  EXPECT_DOUBLE_EQ(model::learning_rate_at(c, 5), 1e-3);
  EXPECT_NEAR(model::learning_rate_at(c, 6), 3e-4, 1e-18);
  EXPECT_NEAR(model::learning_rate_at(c, 11), 9e-5, 1e-18);
}

TEST(Training, LossDecreasesAfterSmoothing) {
  const auto samples = straight_samples(32, 9);
  ASSERT_EQ(samples.size(), 64u);
  model::TrainConfig tc;
  tc.batch_size = 8;
  tc.lr_decay_factor = 0.5;
  tc.decay_every_epochs = 10;
  tc.epoch_count = 25;
  tc.seed = 1;
  const auto r = model::train(samples, small_config(), tc);
  ASSERT_EQ(r.loss_history.size(), 25u);
  std::vector<double> smooth;
  for (std::size_t e = 0; e + 5 <= r.loss_history.size(); ++e) {
    smooth.push_back(std::accumulate(r.loss_history.begin() + e, r.loss_history.begin() + e + 5, 0.0) / 5.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LE(smooth[i], smooth[i - 1]) << "window " << i;
}

TEST(Training, IndependentOfJobCount) {
  const auto samples = straight_samples(6, 10);
  model::TrainConfig tc;
  tc.batch_size = 4;
  tc.epoch_count = 3;
  tc.seed = 2;
  const auto a = model::train(samples, small_config(), tc, 1);
  const auto b = model::train(samples, small_config(), tc, 3);
  EXPECT_EQ(a.loss_history, b.loss_history);
  const auto ta = a.params.tensors();
  const auto tb = b.params.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(*ta[i], *tb[i]);
}

TEST(Training, RejectsEmptySetAndBadConfig) {
  EXPECT_THROW(model::train(std::vector<model::Sample>{}, small_config(), model::TrainConfig{}), DataError);
  model::TrainConfig bad;
  bad.initial_lr = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Checkpoint, BitExactRoundTrip) {
  auto params = model::init_params(small_config(), 11);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1e-3);
  for (auto* t : params.tensors()) {
    for (double& v : t->data()) v += g(rng) / 3.0;
  }
  std::stringstream ss;
  model::write_checkpoint(params, ss);
  const auto back = model::read_checkpoint(ss);
  EXPECT_EQ(back.config, params.config);
  EXPECT_EQ(back.seed, params.seed);
  const auto a = params.tensors();
  const auto b = back.tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
}

TEST(Checkpoint, CorruptInputIsDataError) {
  std::istringstream junk("{\"format\":\"other\"}");
  EXPECT_THROW(model::read_checkpoint(junk), DataError);
  std::stringstream ss;
  model::write_checkpoint(model::init_params(small_config(), 1), ss);
  std::string text = ss.str();
  text.replace(text.find("\"hidden\":16"), 11, "\"hidden\":15");
  std::istringstream odd(text);
  EXPECT_THROW(model::read_checkpoint(odd), DataError);
}
