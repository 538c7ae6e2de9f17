#pragma once

#include <cstdint>
#include <vector>

#include "vecprobe/ingest.hpp"
#include "vecprobe/model.hpp"

namespace vecprobe::model {

// A case ready for the network: normalized, segmented into a node matrix.
struct Sample {
  std::string key;
  scene::GraphInput graph;
  scene::FutureTruth future;  // normalized frame
  grad::Tensor truth;         // interleaved (x, y), zeros past the valid prefix
};

Sample make_sample(const scene::PredictionCase& c, const scene::FeatureSchema& schema,
                   double max_seg_len = scene::kDefaultMaxSegmentLength);
std::vector<Sample> make_samples(const std::vector<scene::PredictionCase>& cases, const scene::FeatureSchema& schema,
                                 double max_seg_len = scene::kDefaultMaxSegmentLength, std::size_t jobs = 1);

struct TrainConfig {
  std::size_t batch_size = 64;
  double initial_lr = 1e-3;
  double lr_decay_factor = 0.3;
  int decay_every_epochs = 5;
  int epoch_count = 30;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Learning rate used during `epoch` (1-based): the initial rate decays by
// lr_decay_factor after every decay_every_epochs completed epochs.
double learning_rate_at(const TrainConfig& config, int epoch);

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;  // mean training loss per epoch
};

// Masked mean squared displacement of one sample, with parameter gradients.
struct SampleGradient {
  double loss = 0.0;
  std::vector<grad::Tensor> grads;  // ModelParams::tensors() order
};
SampleGradient sample_gradient(const ModelParams& params, const Sample& sample);

// Adaptive-moment minibatch descent on the masked MSE. Parameters are
// initialized from config.seed; batches are reshuffled every epoch from the
// same seed. Throws NumericError naming the batch on a non-finite loss.
TrainResult train(const std::vector<Sample>& train_set, const ModelConfig& model_config, const TrainConfig& config,
                  std::size_t jobs = 1);
TrainResult train(const ingest::DatasetSplit& split, const ModelConfig& model_config, const TrainConfig& config,
                  std::size_t jobs = 1);

}  // namespace vecprobe::model
