#include "vecprobe/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "vecprobe/error.hpp"
#include "vecprobe/parallel.hpp"

namespace vecprobe::model {

Sample make_sample(const scene::PredictionCase& c, const scene::FeatureSchema& schema, double max_seg_len) {
  const scene::PredictionCase n = scene::normalize_case(c);
  Sample s;
  s.key = n.key();
  s.graph = scene::build_graph_input(n, schema, max_seg_len);
  s.future = n.future;
  s.truth = truth_tensor(n.future);
  return s;
}

std::vector<Sample> make_samples(const std::vector<scene::PredictionCase>& cases, const scene::FeatureSchema& schema,
                                 double max_seg_len, std::size_t jobs) {
  std::vector<Sample> out(cases.size());
  parallel_for(cases.size(), jobs, [&](std::size_t i) { out[i] = make_sample(cases[i], schema, max_seg_len); });
  return out;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(initial_lr > 0.0)) throw ConfigError("initial learning rate must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr decay factor must lie in (0, 1]");
  if (decay_every_epochs < 1) throw ConfigError("decay interval must be >= 1 epoch");
  if (epoch_count < 1) throw ConfigError("epoch count must be >= 1");
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  const int decays = (std::max(epoch, 1) - 1) / config.decay_every_epochs;
  return config.initial_lr * std::pow(config.lr_decay_factor, decays);
}

SampleGradient sample_gradient(const ModelParams& params, const Sample& sample) {
  ForwardPass fp = forward(params, sample.graph);
  grad::Var loss = grad::mse(fp.prediction, sample.truth, sample.future.mask);
  SampleGradient out;
  out.loss = loss.value()[0];
  out.grads = grad::gradients(fp.tape, loss, fp.params);
  return out;
}

namespace {

struct AdamState {
  std::vector<grad::Tensor> m;
  std::vector<grad::Tensor> v;
  long step = 0;
};

void adam_update(ModelParams& params, AdamState& state, const std::vector<grad::Tensor>& grads, double lr,
                 const TrainConfig& cfg) {
  auto ts = params.tensors();
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto& w = ts[i]->data();
    auto& m = state.m[i].data();
    auto& v = state.v[i].data();
    const auto& g = grads[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.adam_eps);
    }
  }
}

}  // namespace

TrainResult train(const std::vector<Sample>& train_set, const ModelConfig& model_config, const TrainConfig& config,
                  std::size_t jobs) {
  config.validate();
  if (train_set.empty()) throw DataError("train: empty training set");

  TrainResult result{init_params(model_config, config.seed), {}};
  ModelParams& params = result.params;
  AdamState adam;
  for (const grad::Tensor* t : params.tensors()) {
    adam.m.emplace_back(t->shape(), 0.0);
    adam.v.emplace_back(t->shape(), 0.0);
  }

  std::mt19937_64 shuffle_rng(config.seed ^ 0x5bd1e9955bd1e995ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t batch_id = 0;
  for (int epoch = 1; epoch <= config.epoch_count; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = learning_rate_at(config, epoch);
    double epoch_loss = 0.0;

    for (std::size_t first = 0; first < order.size(); first += config.batch_size, ++batch_id) {
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      std::vector<SampleGradient> per_case(count);
      try {
        parallel_for(count, jobs, [&](std::size_t i) { per_case[i] = sample_gradient(params, train_set[order[first + i]]); });
      } catch (const NumericError& e) {
        throw NumericError("train: non-finite values in batch " + std::to_string(batch_id) + " (epoch " +
                           std::to_string(epoch) + "): " + e.what());
      }

      double batch_loss = 0.0;
      std::vector<grad::Tensor> mean = std::move(per_case[0].grads);
      batch_loss += per_case[0].loss;
      for (std::size_t i = 1; i < count; ++i) {
        batch_loss += per_case[i].loss;
        for (std::size_t t = 0; t < mean.size(); ++t) {
          auto& dst = mean[t].data();
          const auto& src = per_case[i].grads[t].data();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train: non-finite loss in batch " + std::to_string(batch_id) + " (epoch " +
                           std::to_string(epoch) + ")");
      }
      const double inv = 1.0 / static_cast<double>(count);
      for (auto& g : mean) {
        for (double& x : g.data()) x *= inv;
      }
      adam_update(params, adam, mean, lr, config);
      epoch_loss += batch_loss;
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(train_set.size()));
  }
  if (!params.all_finite()) throw NumericError("train: parameters became non-finite");
  return result;
}

TrainResult train(const ingest::DatasetSplit& split, const ModelConfig& model_config, const TrainConfig& config,
                  std::size_t jobs) {
  const scene::FeatureSchema schema;
  return train(make_samples(split.train, schema, scene::kDefaultMaxSegmentLength, jobs), model_config, config, jobs);
}

}  // namespace vecprobe::model
