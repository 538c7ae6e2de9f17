#include <cstring>

#include "vecprobe/error.hpp"
#include "vecprobe/grad.hpp"

namespace vecprobe::grad {

const Tensor& Var::value() const { return tape->value(index); }

Var Tape::leaf(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value in leaf tensor");
  nodes_.push_back(Node{"leaf", std::move(value), nullptr, nullptr, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string op, Tensor value, ForwardFn forward, BackwardFn backward,
                 std::vector<std::uint32_t> branches) {
  if (!value.all_finite()) throw NumericError("non-finite output from op '" + op + "'");
  nodes_.push_back(Node{std::move(op), std::move(value), std::move(forward), std::move(backward),
                        std::move(branches)});
  return Var{this, nodes_.size() - 1};
}

void Tape::set_leaf(Var leaf, Tensor value) {
  if (!owns(leaf) || nodes_[leaf.index].forward) throw Error("set_leaf: not a leaf of this tape");
  if (!value.same_shape(nodes_[leaf.index].value)) throw ShapeError("set_leaf: shape change");
  nodes_[leaf.index].value = std::move(value);
}

void Tape::backward(Var seed) {
  if (!owns(seed)) throw Error("backward: seed is not a node of this tape");
  if (nodes_[seed.index].value.size() != 1) throw ShapeError("backward: seed must be a scalar");

  grads_.assign(nodes_.size(), Tensor{});
  has_grad_.assign(nodes_.size(), 0);
  grad_accumulator(seed.index)[0] = 1.0;

  for (std::size_t i = seed.index + 1; i-- > 0;) {
    if (!has_grad_[i] || !nodes_[i].backward) continue;
    // grads_ is presized, so this reference survives accumulation into parents.
    const Tensor& upstream = grads_[i];
    nodes_[i].backward(*this, upstream);
  }
  for (std::size_t i = 0; i <= seed.index; ++i) {
    if (has_grad_[i] && !grads_[i].all_finite()) {
      throw NumericError("non-finite gradient at node " + std::to_string(i) + " (" + nodes_[i].op + ")");
    }
  }
}

Tensor Tape::grad(Var v) const {
  if (!owns(v)) throw Error("grad: variable is not a node of this tape");
  if (v.index < has_grad_.size() && has_grad_[v.index]) return grads_[v.index];
  return Tensor(nodes_[v.index].value.shape(), 0.0);
}

Tensor& Tape::grad_accumulator(std::size_t index) {
  if (!has_grad_[index]) {
    grads_[index] = Tensor(nodes_[index].value.shape(), 0.0);
    has_grad_[index] = 1;
  }
  return grads_[index];
}

void Tape::replay() {
  for (auto& node : nodes_) {
    if (!node.forward) continue;
    node.value = node.forward(*this);
    if (!node.value.all_finite()) throw NumericError("non-finite output from op '" + node.op + "' on replay");
  }
}

bool Tape::replay_matches() const {
  // Parents are recorded before children and are not modified here, so each
  // recomputation sees the recorded parent values.
  for (const auto& node : nodes_) {
    if (!node.forward) continue;
    const Tensor fresh = node.forward(*this);
    if (!fresh.same_shape(node.value)) return false;
    if (std::memcmp(fresh.data().data(), node.value.data().data(), fresh.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

std::uint64_t Tape::branch_signature() const {
  // FNV-1a over (node index, branch words).
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].branches.empty()) continue;
    mix(i);
    for (std::uint32_t w : nodes_[i].branches) mix(w);
  }
  return h;
}

std::vector<Tensor> gradients(Tape& tape, Var seed, std::span<const Var> wrt) {
  tape.backward(seed);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) out.push_back(tape.grad(v));
  return out;
}

}  // namespace vecprobe::grad
