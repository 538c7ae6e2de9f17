#pragma once

// Vectorized polyline-graph trajectory predictor: per-kind polyline
// subgraphs, a target-query cross-attention global graph, and an MLP
// decoder producing one future trajectory.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vecprobe/grad.hpp"
#include "vecprobe/scenario.hpp"

namespace vecprobe::model {

struct ModelConfig {
  std::size_t hidden = 64;  // D: polyline feature width
  std::size_t layers = 3;   // L: subgraph layers per stack
  int history_frames = scene::kDefaultHistoryFrames;
  int future_frames = scene::kDefaultFutureFrames;
  bool layer_norm = true;
  std::size_t input_width = scene::FeatureSchema().row_width();

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Linear {
  grad::Tensor weight;  // in x out
  grad::Tensor bias;    // 1 x out
};

// Each layer encodes rows to D/2 and concatenates the max-pooled row, so every
// layer (and the pooled polyline feature) is D wide.
struct SubgraphStack {
  std::vector<Linear> layers;
};

struct ModelParams {
  ModelConfig config;
  std::uint64_t seed = 0;
  SubgraphStack context;
  SubgraphStack trajectory;
  Linear query;
  Linear key;
  Linear value;
  Linear decoder_hidden;
  Linear decoder_out;  // D x 2*T_f

  // Stable-order views used by the optimizer and the checkpoint format.
  std::vector<grad::Tensor*> tensors();
  std::vector<const grad::Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
};

// Glorot-uniform weights, zero biases.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// A recorded forward pass. The node matrix and every parameter are leaves.
struct ForwardPass {
  grad::Tape tape;
  grad::Var input;
  std::vector<grad::Var> params;  // same order as ModelParams::tensors()
  std::vector<grad::Var> polyline_features;
  grad::Tensor attention_weights;  // 1 x groups
  grad::Var prediction;            // 1 x 2*T_f, interleaved (x, y)
};

ForwardPass forward(const ModelParams& params, const scene::GraphInput& graph);
// Same as forward() with the node matrix replaced (used along IG paths).
ForwardPass forward(const ModelParams& params, const scene::GraphInput& graph, const grad::Tensor& nodes);

// Building blocks, exposed for testing. They record on the operands' tape.
struct LinearVars {
  grad::Var weight;
  grad::Var bias;
};

// rows -> concat(enc(rows), max_pool(enc(rows))), enc = relu(norm(affine)).
grad::Var subgraph_layer(const LinearVars& layer, grad::Var rows, bool layer_norm);
// Layer stack followed by a max-pool over rows: one 1 x D feature.
grad::Var encode_polyline(const std::vector<LinearVars>& stack, grad::Var rows, bool layer_norm);
// Target row of `polyline_features` queries every row (target included).
grad::Var global_interaction(grad::Var polyline_features, std::size_t target_index, const LinearVars& query,
                             const LinearVars& key, const LinearVars& value, grad::Tensor* weights_out = nullptr);

Trajectory to_trajectory(const grad::Tensor& flat);
grad::Tensor truth_tensor(const scene::FutureTruth& future);

// Prediction in the case's normalized frame. The case must be normalized.
Trajectory predict(const ModelParams& params, const scene::GraphInput& graph);

void write_checkpoint(const ModelParams& params, std::ostream& out);
ModelParams read_checkpoint(std::istream& in);
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace vecprobe::model
