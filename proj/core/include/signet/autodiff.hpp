#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "signet/rng.hpp"
#include "signet/tensor.hpp"

namespace signet {

class Tape;

// Handle to one value recorded on a Tape. Cheap to copy; valid until the
// owning tape is cleared or destroyed.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Trainable tensor with a persistent gradient accumulator of the same shape.
// The gradient is zero on construction and after zero_grad(); backward passes
// add into it.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string name_, Tensor value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

  void zero_grad() { std::fill(grad.data().begin(), grad.data().end(), 0.0); }
  std::size_t size() const { return value.numel(); }
};

// Record of one forward pass: values, adjoints and the local backward rules,
// appended in execution order (which is therefore a topological order).
// A tape is confined to one thread for the duration of a forward/backward.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf with no gradient flow.
  Var constant(Tensor value);

  // Leaf whose adjoint is flushed into p.grad during backward(). Using the
  // same Parameter twice on one tape returns the same node, so time-unrolled
  // reuse (LSTM steps) accumulates naturally.
  Var use(Parameter& p);

  // Append an interior node. `backward` reads grad(index) of the new node and
  // accumulates into its parents' grads.
  Var record(Tensor value, BackwardFn backward);

  const Tensor& value(std::size_t index) const { return nodes_[index].value; }
  Tensor& grad(std::size_t index) { return nodes_[index].grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar loss. Seeds the loss adjoint with `seed`
  // (useful for averaging per-window losses into a batch gradient) and visits
  // every node at most once, newest first. Throws ContractError when the loss
  // is not a scalar on this tape.
  void backward(const Var& loss, double seed = 1.0);

  // Drop all nodes but keep allocations of the node vector itself.
  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;  // empty for constants
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<const Parameter*, std::size_t>> live_params_;
};

// ---- primitive operations -------------------------------------------------
// Forward computes the value eagerly; each op records its backward rule on the
// tape of its operands. Shape mismatches throw DimError naming both shapes.

Var matmul(const Var& a, const Var& b);     // [m,k]·[k,n] -> [m,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k]·[n,k]ᵀ -> [m,n]
Var add(const Var& a, const Var& b);        // same shape, elementwise
Var subtract(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);        // elementwise
Var scale(const Var& a, double c);
Var add_bias(const Var& x, const Var& bias);  // rows of x [m,n] + bias {n}

Var sigmoid(const Var& x);   // numerically stable branch, saturates cleanly
Var tanh_act(const Var& x);
Var relu(const Var& x);
Var softmax_rows(const Var& x);  // per-row max subtraction

Var transpose(const Var& x);          // rank-2
Var reshape(const Var& x, Shape to);  // same numel
Var concat(const Var& a, const Var& b, int axis);           // rank-2, axis 0|1
Var slice(const Var& x, int axis, std::size_t begin, std::size_t end);

Var reduce_sum(const Var& x);   // -> [1,1]
Var reduce_mean(const Var& x);  // -> [1,1]
Var mean_rows(const Var& x);    // [m,n] -> [1,n], mean over rows

// Inverted dropout with the given keep mask drawn from `rng`; identity when
// rate == 0. Scales kept entries by 1/(1-rate).
Var dropout(const Var& x, double rate, Rng& rng);

// Row-wise layer norm with learned gain/bias of shape {n}.
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// Mean cross-entropy of row-softmax(logits) against integer labels.
// logits [m,c], labels.size() == m, each label in [0,c). Returns [1,1].
Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels);

enum class PoolMode { kMax, kMean };

// 1-D cross-correlation over x [C_in, L] with weights {C_out, C_in, k} and
// bias {C_out}; zero padding, output length floor((L + 2p - k)/stride) + 1.
Var conv1d(const Var& x, const Var& weights, const Var& bias, std::size_t stride,
           std::size_t padding);

// Non-overlapping 1-D pooling over x [C, L] with window k; trailing remainder
// is dropped. Max pooling routes gradient to the first maximal element.
Var pool1d(const Var& x, std::size_t k, PoolMode mode);

}  // namespace signet
