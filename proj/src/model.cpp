#include "vecprobe/model.hpp"

#include <cmath>
#include <random>

#include "vecprobe/error.hpp"

namespace vecprobe::model {

using grad::Tensor;
using grad::Var;

void ModelConfig::validate() const {
  if (hidden < 2 || hidden % 2 != 0) throw ConfigError("model hidden width must be an even number >= 2");
  if (layers < 1) throw ConfigError("model needs at least one subgraph layer");
  if (history_frames < 2) throw ConfigError("history must span at least 2 frames");
  if (future_frames < 1) throw ConfigError("future horizon must be >= 1 frame");
  if (input_width < 1) throw ConfigError("input width must be positive");
}

namespace {

Linear glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Linear l{Tensor::matrix(in, out), Tensor::matrix(1, out)};
  for (double& w : l.weight.data()) w = dist(rng);
  return l;
}

SubgraphStack make_stack(const ModelConfig& cfg, std::mt19937_64& rng) {
  SubgraphStack s;
  const std::size_t half = cfg.hidden / 2;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    s.layers.push_back(glorot(l == 0 ? cfg.input_width : cfg.hidden, half, rng));
  }
  return s;
}

template <typename Params, typename Ptr>
std::vector<Ptr> collect(Params& p) {
  std::vector<Ptr> out;
  auto add = [&out](auto& lin) {
    out.push_back(&lin.weight);
    out.push_back(&lin.bias);
  };
  for (auto& l : p.context.layers) add(l);
  for (auto& l : p.trajectory.layers) add(l);
  add(p.query);
  add(p.key);
  add(p.value);
  add(p.decoder_hidden);
  add(p.decoder_out);
  return out;
}

}  // namespace

std::vector<Tensor*> ModelParams::tensors() { return collect<ModelParams, Tensor*>(*this); }
std::vector<const Tensor*> ModelParams::tensors() const {
  return collect<const ModelParams, const Tensor*>(*this);
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> names;
  auto add = [&names](const std::string& base) {
    names.push_back(base + ".weight");
    names.push_back(base + ".bias");
  };
  for (std::size_t l = 0; l < context.layers.size(); ++l) add("context." + std::to_string(l));
  for (std::size_t l = 0; l < trajectory.layers.size(); ++l) add("trajectory." + std::to_string(l));
  add("attention.query");
  add("attention.key");
  add("attention.value");
  add("decoder.hidden");
  add("decoder.out");
  return names;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const Tensor* t : tensors()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;
  p.seed = seed;
  p.context = make_stack(config, rng);
  p.trajectory = make_stack(config, rng);
  const std::size_t d = config.hidden;
  p.query = glorot(d, d, rng);
  p.key = glorot(d, d, rng);
  p.value = glorot(d, d, rng);
  p.decoder_hidden = glorot(d, d, rng);
  p.decoder_out = glorot(d, 2 * static_cast<std::size_t>(config.future_frames), rng);
  return p;
}

Var subgraph_layer(const LinearVars& layer, Var rows, bool layer_norm) {
  Var h = grad::affine(rows, layer.weight, layer.bias);
  if (layer_norm) h = grad::layer_norm(h);
  Var enc = grad::relu(h);
  return grad::concat(enc, grad::max_pool_rows(enc));
}

Var encode_polyline(const std::vector<LinearVars>& stack, Var rows, bool layer_norm) {
  Var h = rows;
  for (const auto& layer : stack) h = subgraph_layer(layer, h, layer_norm);
  return grad::max_pool_rows(h);
}

Var global_interaction(Var polyline_features, std::size_t target_index, const LinearVars& query,
                       const LinearVars& key, const LinearVars& value, Tensor* weights_out) {
  if (target_index >= polyline_features.value().rows()) throw ShapeError("target index outside polyline set");
  Var target = grad::slice_rows(polyline_features, target_index, 1);
  Var q = grad::affine(target, query.weight, query.bias);
  Var k = grad::affine(polyline_features, key.weight, key.bias);
  Var v = grad::affine(polyline_features, value.weight, value.bias);
  return grad::scaled_dot_attention(q, k, v, weights_out);
}

ForwardPass forward(const ModelParams& params, const scene::GraphInput& graph) {
  return forward(params, graph, graph.nodes);
}

ForwardPass forward(const ModelParams& params, const scene::GraphInput& graph, const Tensor& nodes) {
  const ModelConfig& cfg = params.config;
  if (nodes.cols() != cfg.input_width) {
    throw ShapeError("node width " + std::to_string(nodes.cols()) + " does not match model input width " +
                     std::to_string(cfg.input_width));
  }
  if (graph.groups.empty()) throw ShapeError("graph has no polyline groups");

  ForwardPass fp;
  grad::Tape& tape = fp.tape;
  fp.input = tape.leaf(nodes);
  for (const Tensor* t : params.tensors()) fp.params.push_back(tape.leaf(*t));

  std::size_t cursor = 0;
  auto next_linear = [&]() {
    LinearVars lv{fp.params[cursor], fp.params[cursor + 1]};
    cursor += 2;
    return lv;
  };
  std::vector<LinearVars> context_stack, trajectory_stack;
  for (std::size_t l = 0; l < params.context.layers.size(); ++l) context_stack.push_back(next_linear());
  for (std::size_t l = 0; l < params.trajectory.layers.size(); ++l) trajectory_stack.push_back(next_linear());
  const LinearVars query = next_linear();
  const LinearVars key = next_linear();
  const LinearVars value = next_linear();
  const LinearVars dec_hidden = next_linear();
  const LinearVars dec_out = next_linear();

  for (const auto& group : graph.groups) {
    Var rows = grad::slice_rows(fp.input, group.first_row, group.row_count);
    const auto& stack = scene::is_trajectory(group.kind) ? trajectory_stack : context_stack;
    fp.polyline_features.push_back(encode_polyline(stack, rows, cfg.layer_norm));
  }
  Var features = grad::stack_rows(fp.polyline_features);
  Var ctx = global_interaction(features, graph.target_group, query, key, value, &fp.attention_weights);
  Var hidden = grad::relu(grad::affine(ctx, dec_hidden.weight, dec_hidden.bias));
  fp.prediction = grad::affine(hidden, dec_out.weight, dec_out.bias);
  return fp;
}

Trajectory to_trajectory(const Tensor& flat) {
  Trajectory out(flat.size() / 2);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = {flat[2 * t], flat[2 * t + 1]};
  return out;
}

Tensor truth_tensor(const scene::FutureTruth& future) {
  Tensor t = Tensor::matrix(1, 2 * future.positions.size());
  for (std::size_t i = 0; i < future.positions.size(); ++i) {
    if (!future.mask[i]) continue;
    t[2 * i] = future.positions[i].x;
    t[2 * i + 1] = future.positions[i].y;
  }
  return t;
}

Trajectory predict(const ModelParams& params, const scene::GraphInput& graph) {
  ForwardPass fp = forward(params, graph);
  return to_trajectory(fp.prediction.value());
}

}  // namespace vecprobe::model
