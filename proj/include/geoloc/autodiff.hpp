#pragma once

// Reverse-mode automatic differentiation over a flat, append-only tape.
//
// A Tape owns every value computed while it is alive. Operations take and
// return Var handles; a node is recorded with a backward rule only when one of
// its operands requires a gradient. Tapes are confined to one thread; run
// independent tapes for parallel evaluation.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "geoloc/tensor.hpp"

namespace geoloc::ad {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Backward rule: receives the node's forward value, its gradient and one
/// accumulator per operand (null for operands that do not require a gradient).
using BackwardFn = std::function<void(const Tensor& out, const Tensor& grad_out,
                                      std::span<Tensor* const> grad_in)>;

class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that accumulates a gradient.
  Var variable(Tensor value);
  /// Leaf without a gradient.
  Var constant(Tensor value);

  /// Appends an operation result. Used by the primitive implementations.
  Var record(Tensor value, std::vector<Var> operands, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient of the last backward pass; zeros if none reached this node.
  const Tensor& grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates in reverse recording order.
  /// Throws kRank for a non-scalar loss and kTape for a foreign handle.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

  /// Throws kTape unless v was recorded on this tape.
  void check_owned(Var v) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::size_t> operands;
    BackwardFn backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::uint64_t id_;
  std::deque<Node> nodes_;
};

// Primitive set. All operands must live on the same tape.

/// (M,K) x (K,N) -> (M,N)
Var matmul(Var a, Var b);
/// x (B,C,H,W), w (O,C,KH,KW) -> (B,O,Ho,Wo). No bias; see bias_add.
Var conv2d(Var x, Var w, std::size_t stride, std::size_t padding);
/// Max over window x window patches; ties go to the first element in scan order.
Var maxpool2d(Var x, std::size_t window, std::size_t stride);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// Adds b (C,) along axis 1 of x (B,C,...).
Var bias_add(Var x, Var b);
Var concat(std::span<const Var> parts, std::size_t axis);
/// Sub-range [begin, end) along an axis.
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);
/// Mean of all elements -> scalar.
Var mean(Var x);
/// Sum of all elements -> scalar.
Var sum(Var x);
/// (B,C,H,W) -> (B,C) mean over the spatial axes.
Var global_avg_pool(Var x);

/// Mean over all elements of smooth-L1(pred - target):
///   0.5 r^2 for |r| < 1, |r| - 0.5 otherwise.
Var smooth_l1_loss(Var pred, Var target);

/// Scalar smooth-L1 and its derivative, shared with evaluation code.
double smooth_l1(double r);
double smooth_l1_slope(double r);

}  // namespace geoloc::ad
