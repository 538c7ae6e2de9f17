#pragma once

// Reverse-mode differentiation over the small, fixed op set the predictor
// needs. Ops are recorded on a Tape; backward() then fills gradients for
// every node reachable from a scalar seed.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vecprobe/tensor.hpp"

namespace vecprobe::grad {

class Tape;

// Handle to a node on a tape. Cheap to copy; it and value() references stay
// valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
};

class Tape {
 public:
  // Recomputes a node's value from its parents' current values.
  using ForwardFn = std::function<Tensor(const Tape&)>;
  // Accumulates the node's incoming gradient into its parents.
  using BackwardFn = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var leaf(Tensor value);
  // `branches` records discrete decisions (relu masks, argmax rows) taken
  // while computing `value`; they feed branch_signature().
  Var record(std::string op, Tensor value, ForwardFn forward, BackwardFn backward,
             std::vector<std::uint32_t> branches = {});

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t index) const { return nodes_.at(index).value; }
  const Tensor& value(Var v) const { return value(v.index); }
  const std::string& op_name(std::size_t index) const { return nodes_.at(index).op; }
  bool owns(Var v) const { return v.tape == this && v.index < nodes_.size(); }

  // Overwrites a leaf's value; run replay() afterwards to refresh dependents.
  void set_leaf(Var leaf, Tensor value);

  // Seeds d(seed)/d(seed) = 1 and propagates to every reachable node.
  // Throws Error if `seed` is not a scalar node of this tape.
  void backward(Var seed);

  // Gradient of the last backward() seed with respect to `v`; zeros if `v`
  // was not reached.
  Tensor grad(Var v) const;
  // Mutable accumulator used by backward closures.
  Tensor& grad_accumulator(std::size_t index);

  // Recomputes every non-leaf node in recording order from the leaves and
  // stores the fresh values.
  void replay();
  // Recomputes all non-leaf values without storing them and reports whether
  // every one is bit-identical to the recorded value.
  bool replay_matches() const;

  // Hash of every discrete branch taken during the forward pass. Two
  // evaluations with equal signatures lie on the same smooth piece.
  std::uint64_t branch_signature() const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    ForwardFn forward;
    BackwardFn backward;
    std::vector<std::uint32_t> branches;
  };

  std::deque<Node> nodes_;  // deque: value() references survive later records
  std::vector<Tensor> grads_;
  std::vector<std::uint8_t> has_grad_;
};

// x[n x in] * W[in x out] + b[1 x out]
Var affine(Var x, Var w, Var b);
Var relu(Var x);
// Per-row standardization, no learnable gain or bias.
Var layer_norm(Var x, double eps = 1e-5);
// Column-wise maximum over rows; the first argmax row wins ties.
Var max_pool_rows(Var x);
// Column concatenation. If `b` has one row and `a` has more, `b` is
// broadcast to every row of `a`.
Var concat(Var a, Var b);
// Row-wise softmax.
Var softmax(Var x);
// softmax(Q K^T / sqrt(d)) V. If `weights_out` is given it receives the
// attention weights (rows of Q x rows of K).
Var scaled_dot_attention(Var q, Var k, Var v, Tensor* weights_out = nullptr);
// Mean over mask-valid frames of squared Euclidean displacement. `pred` and
// `truth` hold interleaved (x, y) pairs, one per frame.
Var mse(Var pred, const Tensor& truth, std::span<const std::uint8_t> mask);
Var scale(Var x, double factor);
Var slice_rows(Var x, std::size_t first, std::size_t count);
// Stacks 1 x C row vectors into an n x C matrix.
Var stack_rows(std::span<const Var> rows);

// Runs backward from `seed` and returns the gradient for each of `wrt`.
std::vector<Tensor> gradients(Tape& tape, Var seed, std::span<const Var> wrt);

}  // namespace vecprobe::grad
