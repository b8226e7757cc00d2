#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "sdpadv/params.hpp"
#include "sdpadv/tensor.hpp"

SDPADV_NAMESPACE_BEGIN

enum class OpKind : std::uint8_t {
  Leaf,
  Dense,
  Conv2d,
  Relu,
  Tanh,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Clamp,
  Minimum,
  Sign,
  Abs,
  Sum,
  Mean,
  Reshape,
  SoftmaxCrossEntropy,
  Softmax,
  SelectColumn,
  Log,
  RowNorm,
  RadialProject,
  AffineGrid,
  BilinearSample,
  kCount
};

std::string_view op_name(OpKind kind);

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient after Tape::backward; zeros if the node received none.
  Tensor grad() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Eager record-and-replay reverse-mode tape. Nodes are appended in
/// evaluation order, so reverse index order is a valid topological order.
/// A tape is single-threaded; use one tape per training step.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient (e.g. an image under attack).
  Var variable(Tensor value);
  /// Leaf bound to a network parameter. When `trainable`, backward()
  /// accumulates into param.grad; otherwise the parameter is a constant.
  Var parameter(Parameter& param, bool trainable = true);
  /// Parameter value as a constant leaf (frozen network).
  Var frozen(const Parameter& param) { return constant(param.value); }

  /// Records an op output. `backward` is only invoked when the output
  /// requires a gradient; it must accumulate into parents via grad_of().
  Var record(OpKind kind, Tensor value, std::initializer_list<Var> parents,
             BackwardFn backward);

  /// Reverse sweep from a scalar loss seeded with 1.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Mutable gradient buffer of a node, allocated on first use.
  Tensor& grad_of(Var v);
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t op_count(OpKind kind) const noexcept {
    return counts_[static_cast<std::size_t>(kind)];
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    OpKind kind = OpKind::Leaf;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Node n);

  std::deque<Node> nodes_;
  std::array<std::size_t, static_cast<std::size_t>(OpKind::kCount)> counts_{};
};

/// Verifies both handles belong to the same tape and returns it.
Tape& same_tape(Var a, Var b);

SDPADV_NAMESPACE_END
