#include "sdpadv/autodiff.hpp"

#include <algorithm>
#include <string>

#include "sdpadv/error.hpp"

SDPADV_NAMESPACE_BEGIN

std::string_view op_name(OpKind kind) {
  static constexpr std::array<std::string_view, static_cast<std::size_t>(OpKind::kCount)>
      names = {"leaf",    "dense",  "conv2d",  "relu",      "tanh",
               "add",     "sub",    "mul",     "scale",     "add_scalar",
               "clamp",   "minimum", "sign",   "abs",       "sum",
               "mean",    "reshape", "softmax_cross_entropy", "softmax",
               "select_column", "log", "row_norm", "radial_project",
               "affine_grid", "bilinear_sample"};
  return names[static_cast<std::size_t>(kind)];
}

const Tensor& Var::value() const { return tape_->value(*this); }
Tensor Var::grad() const { return tape_->grad(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Tape::Node& Tape::node(Var v) {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw UsageError("variable does not belong to this tape");
  return nodes_[v.id_];
}

const Tape::Node& Tape::node(Var v) const { return const_cast<Tape*>(this)->node(v); }

Var Tape::push(Node n) {
  counts_[static_cast<std::size_t>(n.kind)]++;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& param, bool trainable) {
  Node n;
  n.value = param.value;
  n.requires_grad = trainable;
  n.param = trainable ? &param : nullptr;
  return push(std::move(n));
}

Var Tape::record(OpKind kind, Tensor value, std::initializer_list<Var> parents,
                 BackwardFn backward) {
  if (!value.all_finite())
    throw NumericError(std::string("non-finite value produced by ") + std::string(op_name(kind)));
  Node n;
  n.value = std::move(value);
  n.kind = kind;
  for (Var p : parents) {
    const Node& pn = node(p);
    n.parents.push_back(p.id_);
    n.requires_grad = n.requires_grad || pn.requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Tape::grad_of(Var v) {
  Node& n = node(v);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.shape() != n.value.shape()) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  Node& root = node(loss);
  if (root.value.size() != 1)
    throw UsageError("backward requires a scalar loss, got shape " + to_string(root.value.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  grad_of(loss).fill(1);

  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, n.grad);
    }
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad;
      if (pg.shape() != n.grad.shape()) pg = Tensor(n.grad.shape());
      Real* dst = pg.ptr();
      const Real* src = n.grad.ptr();
      for (std::size_t k = 0; k < pg.size(); ++k) dst[k] += src[k];
    }
  }
}

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw UsageError("operands recorded on different tapes");
  return a.tape();
}

SDPADV_NAMESPACE_END
