#pragma once

// Tape-based reverse-mode differentiation over dense 2-D tensors.
//
// A Tape records every primitive applied during one forward pass. Node ids are
// handed out in creation order, so parents always precede children and the
// reverse id order is a valid topological order for the backward sweep.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stgin/tensor.hpp"

namespace stgin::ad {

/// Learnable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor2D value;
  Tensor2D grad;

  Parameter() = default;
  Parameter(std::string name, Tensor2D value);

  void zero_grad() { grad.fill(0.0); }
};

enum class OpTag {
  matmul,
  add,
  sub,
  mul,
  div,
  concat_cols,
  slice_cols,
  transpose,
  leaky_relu,
  elu,
  sigmoid,
  tanh,
  exp,
  log,
  softplus,
  square,
  masked_sum,
  scalar_scale,
  add_scalar,
  row_softmax_masked,
};

std::string_view to_string(OpTag tag);

/// Extra operands for the primitives that take them: `scalar` is the
/// LeakyReLU slope, the scale factor or the added constant; `begin`/`count`
/// select columns for slice_cols; `mask` is used by masked_sum and
/// row_softmax_masked.
struct OpAttrs {
  double scalar = 0.0;
  std::size_t begin = 0;
  std::size_t count = 0;
  Tensor2D mask;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor2D& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  /// With `record = false` no backward closures are stored; forward-only
  /// evaluation (inference, finite differences) is cheaper.
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor2D value);
  /// Registers a parameter leaf. Repeated calls with the same parameter return
  /// the same node.
  Var parameter(Parameter& p);

  const Tensor2D& value(Var v) const { return nodes_[v.id].value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool recording() const noexcept { return record_; }

  /// Accumulates d(root)/d(p) into every reachable Parameter::grad.
  /// Root must be 1×1.
  void backward(Var root);

  // Used by primitive implementations.
  using Backprop = std::function<void(Tape&, std::size_t self)>;
  Var push(Tensor2D value, std::vector<std::size_t> parents, Backprop backprop);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const Tensor2D& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient slot of a node, allocated to zeros on first access.
  Tensor2D& grad_slot(std::size_t id);

 private:
  struct Node {
    Tensor2D value;
    Tensor2D grad;
    std::vector<std::size_t> parents;
    Backprop backprop;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
};

// Primitives. Shape errors throw stgin::Error naming the primitive and the
// offending shapes. Binary elementwise ops broadcast dimensions of size 1.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var transpose(Var a);
Var leaky_relu(Var a, double slope);
Var elu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var softplus(Var a);
Var square(Var a);
/// 1×1 sum of a ⊙ mask.
Var masked_sum(Var a, const Tensor2D& mask);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Row softmax over positions where mask != 0; other positions come out 0.
Var row_softmax_masked(Var a, const Tensor2D& mask);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

/// Tag-dispatched form of the primitives above.
Var apply(OpTag tag, std::span<const Var> inputs, const OpAttrs& attrs = {});

/// Evaluates one primitive on plain tensors.
Tensor2D primitive_forward(OpTag tag, std::span<const Tensor2D> inputs,
                           const OpAttrs& attrs = {});

/// Number of tensor inputs a primitive takes; 0 means variadic.
std::size_t arity(OpTag tag);

/// Every tag, in declaration order.
std::span<const OpTag> all_op_tags();

// Gradient checking.

/// |a-b| / max(1, |a|, |b|)
double relative_error(double a, double b);

/// Central differences (f(p+h) - f(p-h)) / 2h for every coordinate of every
/// parameter. Parameters are perturbed in place and restored bit-exactly.
std::vector<Tensor2D> finite_diff_grad(const std::function<double()>& loss,
                                       std::span<Parameter* const> params, double h = 1e-5);

struct GradCheckResult {
  double worst_relative_error = 0.0;
  std::string worst_coordinate;
  std::size_t coordinates = 0;
};

/// Compares the accumulated Parameter::grad values against finite differences.
GradCheckResult compare_gradients(std::span<Parameter* const> params,
                                  const std::vector<Tensor2D>& numeric);

}  // namespace stgin::ad
