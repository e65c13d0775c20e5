#include "stgin/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "stgin/error.hpp"
#include "stgin/simd/kernels.hpp"

namespace stgin::ad {

Parameter::Parameter(std::string name_, Tensor2D value_)
    : name(std::move(name_)), value(std::move(value_)), grad(Tensor2D::zeros_like(value)) {}

std::string_view to_string(OpTag tag) {
  switch (tag) {
    case OpTag::matmul: return "matmul";
    case OpTag::add: return "add";
    case OpTag::sub: return "sub";
    case OpTag::mul: return "elementwise-multiply";
    case OpTag::div: return "div";
    case OpTag::concat_cols: return "concat-cols";
    case OpTag::slice_cols: return "slice-cols";
    case OpTag::transpose: return "transpose";
    case OpTag::leaky_relu: return "leaky-relu";
    case OpTag::elu: return "elu";
    case OpTag::sigmoid: return "sigmoid";
    case OpTag::tanh: return "tanh";
    case OpTag::exp: return "exp";
    case OpTag::log: return "log";
    case OpTag::softplus: return "softplus";
    case OpTag::square: return "square";
    case OpTag::masked_sum: return "masked-sum";
    case OpTag::scalar_scale: return "scalar-scale";
    case OpTag::add_scalar: return "add-scalar";
    case OpTag::row_softmax_masked: return "row-softmax-masked";
  }
  return "unknown";
}

const Tensor2D& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor2D value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{this, it->second};
  nodes_.push_back(Node{p.value, {}, {}, {}, &p, record_});
  param_ids_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Tensor2D value, std::vector<std::size_t> parents, Backprop backprop) {
  bool needs = false;
  if (record_) {
    for (std::size_t p : parents) needs = needs || nodes_[p].needs_grad;
  }
  Node node{std::move(value), {}, {}, {}, nullptr, needs};
  if (needs) {
    node.parents = std::move(parents);
    node.backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor2D& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor2D::zeros_like(n.value);
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw Error(ErrorKind::invalid_argument, "backward: root from another tape");
  const Tensor2D& rv = nodes_[root.id].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw Error(ErrorKind::shape, "backward: root must be 1x1, got " + rv.shape_string());
  }
  if (!nodes_[root.id].needs_grad) return;
  for (Node& n : nodes_) n.grad = Tensor2D();
  grad_slot(root.id)[0] = 1.0;
  const auto& k = simd::kernels();
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backprop) n.backprop(*this, id);
    if (n.param != nullptr) k.axpy(n.grad.size(), 1.0, n.grad.data(), n.param->grad.data());
  }
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

[[noreturn]] void shape_error(OpTag tag, const std::string& detail) {
  throw Error(ErrorKind::shape, std::string(to_string(tag)) + ": " + detail);
}

void same_tape(OpTag tag, Var a, Var b) {
  if (a.tape != b.tape) shape_error(tag, "operands live on different tapes");
}

struct Broadcast {
  std::size_t rows, cols;
  std::size_t a_rs, a_cs, b_rs, b_cs;
  bool trivial;
};

Broadcast broadcast(OpTag tag, const Tensor2D& a, const Tensor2D& b) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    shape_error(tag, a.shape_string() + " and " + b.shape_string() + " do not broadcast");
  };
  Broadcast bc{};
  bc.rows = dim(a.rows(), b.rows());
  bc.cols = dim(a.cols(), b.cols());
  bc.a_rs = a.rows() == 1 ? 0 : a.cols();
  bc.a_cs = a.cols() == 1 ? 0 : 1;
  bc.b_rs = b.rows() == 1 ? 0 : b.cols();
  bc.b_cs = b.cols() == 1 ? 0 : 1;
  bc.trivial = a.same_shape(b);
  return bc;
}

// Elementwise binary op with broadcasting. `fwd(x, y)` gives the value,
// `dfx(x, y, out)` / `dfy(x, y, out)` the partials.
template <class Fwd, class Dx, class Dy>
Var binary(OpTag tag, Var a, Var b, Fwd fwd, Dx dfx, Dy dfy) {
  same_tape(tag, a, b);
  const Tensor2D& av = a.value();
  const Tensor2D& bv = b.value();
  const Broadcast bc = broadcast(tag, av, bv);
  Tensor2D out(bc.rows, bc.cols);
  for (std::size_t i = 0; i < bc.rows; ++i)
    for (std::size_t j = 0; j < bc.cols; ++j)
      out(i, j) = fwd(av[i * bc.a_rs + j * bc.a_cs], bv[i * bc.b_rs + j * bc.b_cs]);
  Tape& tape = *a.tape;
  return tape.push(std::move(out), {a.id, b.id},
                   [a = a.id, b = b.id, bc, dfx, dfy](Tape& t, std::size_t self) {
                     const Tensor2D& av = t.value(Var{&t, a});
                     const Tensor2D& bv = t.value(Var{&t, b});
                     const Tensor2D& yv = t.value(Var{&t, self});
                     const Tensor2D& g = t.grad(self);
                     const bool ga_needed = t.needs_grad(a);
                     const bool gb_needed = t.needs_grad(b);
                     Tensor2D* ga = ga_needed ? &t.grad_slot(a) : nullptr;
                     Tensor2D* gb = gb_needed ? &t.grad_slot(b) : nullptr;
                     for (std::size_t i = 0; i < bc.rows; ++i) {
                       for (std::size_t j = 0; j < bc.cols; ++j) {
                         const std::size_t ia = i * bc.a_rs + j * bc.a_cs;
                         const std::size_t ib = i * bc.b_rs + j * bc.b_cs;
                         const double gij = g(i, j);
                         if (ga) (*ga)[ia] += gij * dfx(av[ia], bv[ib], yv(i, j));
                         if (gb) (*gb)[ib] += gij * dfy(av[ia], bv[ib], yv(i, j));
                       }
                     }
                   });
}

// Elementwise unary op; `df(x, y)` is dy/dx given input and output.
template <class Fwd, class Df>
Var unary(Var a, Fwd fwd, Df df) {
  const Tensor2D& av = a.value();
  Tensor2D out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return a.tape->push(std::move(out), {a.id}, [a = a.id, df](Tape& t, std::size_t self) {
    const Tensor2D& x = t.value(Var{&t, a});
    const Tensor2D& y = t.value(Var{&t, self});
    const Tensor2D& g = t.grad(self);
    Tensor2D& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(OpTag::matmul, a, b);
  const Tensor2D& av = a.value();
  const Tensor2D& bv = b.value();
  if (av.cols() != bv.rows()) {
    shape_error(OpTag::matmul, av.shape_string() + " times " + bv.shape_string());
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor2D out(m, n);
  simd::kernels().gemm_nn(m, n, k, av.data(), bv.data(), out.data());
  return a.tape->push(std::move(out), {a.id, b.id},
                      [a = a.id, b = b.id, m, n, k](Tape& t, std::size_t self) {
                        const auto& kern = simd::kernels();
                        const Tensor2D& g = t.grad(self);
                        if (t.needs_grad(a)) {
                          kern.gemm_nt(m, k, n, g.data(), t.value(Var{&t, b}).data(),
                                       t.grad_slot(a).data());
                        }
                        if (t.needs_grad(b)) {
                          kern.gemm_tn(k, n, m, t.value(Var{&t, a}).data(), g.data(),
                                       t.grad_slot(b).data());
                        }
                      });
}

Var add(Var a, Var b) {
  if (a.tape == b.tape && a.value().same_shape(b.value())) {
    const Tensor2D& av = a.value();
    Tensor2D out(av.rows(), av.cols());
    simd::kernels().add(av.size(), av.data(), b.value().data(), out.data());
    return a.tape->push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
      const auto& kern = simd::kernels();
      const Tensor2D& g = t.grad(self);
      if (t.needs_grad(a)) kern.axpy(g.size(), 1.0, g.data(), t.grad_slot(a).data());
      if (t.needs_grad(b)) kern.axpy(g.size(), 1.0, g.data(), t.grad_slot(b).data());
    });
  }
  return binary(
      OpTag::add, a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      OpTag::sub, a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  if (a.tape == b.tape && a.value().same_shape(b.value())) {
    const Tensor2D& av = a.value();
    Tensor2D out(av.rows(), av.cols());
    simd::kernels().mul(av.size(), av.data(), b.value().data(), out.data());
    return a.tape->push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
      const auto& kern = simd::kernels();
      const Tensor2D& g = t.grad(self);
      if (t.needs_grad(a))
        kern.mul_acc(g.size(), g.data(), t.value(Var{&t, b}).data(), t.grad_slot(a).data());
      if (t.needs_grad(b))
        kern.mul_acc(g.size(), g.data(), t.value(Var{&t, a}).data(), t.grad_slot(b).data());
    });
  }
  return binary(
      OpTag::mul, a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  const Tensor2D& bv = b.value();
  if (std::any_of(bv.values().begin(), bv.values().end(), [](double v) { return v == 0.0; })) {
    throw Error(ErrorKind::numeric, "div: zero divisor");
  }
  return binary(
      OpTag::div, a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) shape_error(OpTag::concat_cols, "no inputs");
  Tape* tape = parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.tape != tape) shape_error(OpTag::concat_cols, "operands live on different tapes");
    if (p.rows() != rows) {
      shape_error(OpTag::concat_cols, "row mismatch " + parts.front().value().shape_string() +
                                          " vs " + p.value().shape_string());
    }
    ids.push_back(p.id);
    offsets.push_back(cols);
    cols += p.cols();
  }
  Tensor2D out(rows, cols);
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const Tensor2D& v = parts[q].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + offsets[q]);
  }
  std::vector<std::size_t> parents = ids;
  return tape->push(std::move(out), std::move(parents),
                    [ids, offsets, rows](Tape& t, std::size_t self) {
                      const Tensor2D& g = t.grad(self);
                      for (std::size_t q = 0; q < ids.size(); ++q) {
                        if (!t.needs_grad(ids[q])) continue;
                        Tensor2D& gp = t.grad_slot(ids[q]);
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, offsets[q] + c);
                      }
                    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor2D& av = a.value();
  if (count == 0 || begin + count > av.cols()) {
    shape_error(OpTag::slice_cols, "columns [" + std::to_string(begin) + ", " +
                                       std::to_string(begin + count) + ") of " + av.shape_string());
  }
  Tensor2D out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  return a.tape->push(std::move(out), {a.id}, [a = a.id, begin, count](Tape& t, std::size_t self) {
    const Tensor2D& g = t.grad(self);
    Tensor2D& ga = t.grad_slot(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) ga(r, begin + c) += g(r, c);
  });
}

Var transpose(Var a) {
  return a.tape->push(a.value().transposed(), {a.id}, [a = a.id](Tape& t, std::size_t self) {
    const Tensor2D& g = t.grad(self);
    Tensor2D& ga = t.grad_slot(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
  });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var elu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  const Tensor2D& av = a.value();
  if (std::any_of(av.values().begin(), av.values().end(), [](double v) { return !(v > 0.0); })) {
    throw Error(ErrorKind::numeric, "log: non-positive input");
  }
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(Var a) {
  return unary(a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var masked_sum(Var a, const Tensor2D& mask) {
  const Tensor2D& av = a.value();
  if (!av.same_shape(mask)) {
    shape_error(OpTag::masked_sum, av.shape_string() + " with mask " + mask.shape_string());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (mask[i] != 0.0) s += av[i] * mask[i];
  }
  return a.tape->push(Tensor2D(1, 1, s), {a.id}, [a = a.id, mask](Tape& t, std::size_t self) {
    simd::kernels().axpy(mask.size(), t.grad(self)[0], mask.data(), t.grad_slot(a).data());
  });
}

Var scale(Var a, double s) {
  return unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var row_softmax_masked(Var a, const Tensor2D& mask) {
  const Tensor2D& av = a.value();
  if (!av.same_shape(mask)) {
    shape_error(OpTag::row_softmax_masked,
                av.shape_string() + " with mask " + mask.shape_string());
  }
  Tensor2D out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double peak = -HUGE_VAL;
    for (std::size_t c = 0; c < av.cols(); ++c)
      if (mask(r, c) != 0.0) peak = std::max(peak, av(r, c));
    if (peak == -HUGE_VAL) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      if (mask(r, c) == 0.0) continue;
      out(r, c) = std::exp(av(r, c) - peak);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) /= z;
  }
  return a.tape->push(std::move(out), {a.id}, [a = a.id](Tape& t, std::size_t self) {
    const Tensor2D& y = t.value(Var{&t, self});
    const Tensor2D& g = t.grad(self);
    Tensor2D& ga = t.grad_slot(a);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double inner = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) inner += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - inner);
    }
  });
}

// ---------------------------------------------------------------------------
// Tag dispatch

namespace {

constexpr std::array kAllTags{
    OpTag::matmul,   OpTag::add,        OpTag::sub,          OpTag::mul,
    OpTag::div,      OpTag::concat_cols, OpTag::slice_cols,  OpTag::transpose,
    OpTag::leaky_relu, OpTag::elu,      OpTag::sigmoid,      OpTag::tanh,
    OpTag::exp,      OpTag::log,        OpTag::softplus,     OpTag::square,
    OpTag::masked_sum, OpTag::scalar_scale, OpTag::add_scalar, OpTag::row_softmax_masked,
};

}  // namespace

std::span<const OpTag> all_op_tags() { return kAllTags; }

std::size_t arity(OpTag tag) {
  switch (tag) {
    case OpTag::matmul:
    case OpTag::add:
    case OpTag::sub:
    case OpTag::mul:
    case OpTag::div: return 2;
    case OpTag::concat_cols: return 0;
    default: return 1;
  }
}

Var apply(OpTag tag, std::span<const Var> in, const OpAttrs& attrs) {
  const std::size_t want = arity(tag);
  if ((want == 0 && in.empty()) || (want != 0 && in.size() != want)) {
    shape_error(tag, "expected " + std::to_string(want) + " inputs, got " +
                         std::to_string(in.size()));
  }
  switch (tag) {
    case OpTag::matmul: return matmul(in[0], in[1]);
    case OpTag::add: return add(in[0], in[1]);
    case OpTag::sub: return sub(in[0], in[1]);
    case OpTag::mul: return mul(in[0], in[1]);
    case OpTag::div: return div(in[0], in[1]);
    case OpTag::concat_cols: return concat_cols(in);
    case OpTag::slice_cols: return slice_cols(in[0], attrs.begin, attrs.count);
    case OpTag::transpose: return transpose(in[0]);
    case OpTag::leaky_relu: return leaky_relu(in[0], attrs.scalar);
    case OpTag::elu: return elu(in[0]);
    case OpTag::sigmoid: return sigmoid(in[0]);
    case OpTag::tanh: return tanh(in[0]);
    case OpTag::exp: return exp(in[0]);
    case OpTag::log: return log(in[0]);
    case OpTag::softplus: return softplus(in[0]);
    case OpTag::square: return square(in[0]);
    case OpTag::masked_sum: return masked_sum(in[0], attrs.mask);
    case OpTag::scalar_scale: return scale(in[0], attrs.scalar);
    case OpTag::add_scalar: return add_scalar(in[0], attrs.scalar);
    case OpTag::row_softmax_masked: return row_softmax_masked(in[0], attrs.mask);
  }
  shape_error(tag, "unknown primitive");
}

Tensor2D primitive_forward(OpTag tag, std::span<const Tensor2D> inputs, const OpAttrs& attrs) {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor2D& t : inputs) vars.push_back(tape.constant(t));
  return apply(tag, vars, attrs).value();
}

// ---------------------------------------------------------------------------
// Gradient checking

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

std::vector<Tensor2D> finite_diff_grad(const std::function<double()>& loss,
                                       std::span<Parameter* const> params, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::invalid_argument, "finite_diff_grad: step must be > 0");
  std::vector<Tensor2D> out;
  out.reserve(params.size());
  for (Parameter* p : params) {
    Tensor2D g = Tensor2D::zeros_like(p->value);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = loss();
      p->value[i] = orig - h;
      const double down = loss();
      p->value[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw Error(ErrorKind::numeric, "finite_diff_grad: non-finite loss at " + p->name + "[" +
                                            std::to_string(i / p->value.cols()) + "," +
                                            std::to_string(i % p->value.cols()) + "]");
      }
      g[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

GradCheckResult compare_gradients(std::span<Parameter* const> params,
                                  const std::vector<Tensor2D>& numeric) {
  if (numeric.size() != params.size()) {
    throw Error(ErrorKind::shape, "compare_gradients: parameter count mismatch");
  }
  GradCheckResult res;
  for (std::size_t q = 0; q < params.size(); ++q) {
    const Parameter& p = *params[q];
    if (!p.grad.same_shape(numeric[q])) {
      throw Error(ErrorKind::shape, "compare_gradients: shape mismatch for " + p.name);
    }
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      const double e = relative_error(p.grad[i], numeric[q][i]);
      ++res.coordinates;
      if (e > res.worst_relative_error || res.worst_coordinate.empty()) {
        res.worst_relative_error = std::max(res.worst_relative_error, e);
        res.worst_coordinate =
            p.name + "[" + std::to_string(i / p.value.cols()) + "," + std::to_string(i % p.value.cols()) + "]";
      }
    }
  }
  return res;
}

}  // namespace stgin::ad
