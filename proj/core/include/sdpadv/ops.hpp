#pragma once

#include <cstddef>
#include <span>

#include "sdpadv/autodiff.hpp"

SDPADV_NAMESPACE_BEGIN

// Differentiable operations recorded on the tape of their operands.
// Binary ops require both operands to live on the same tape.

/// out[b,o] = sum_i in[b,i] * weight[i,o] + bias[o].
Var dense(Var input, Var weight, Var bias);

struct ConvGeometry {
  std::size_t out_h, out_w;
  std::size_t pad_top, pad_left;
};

/// "Same"-style zero padding: out = ceil(in / stride); the total padding
/// max((out-1)*stride + k - in, 0) is split with the smaller half on top/left.
ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kh,
                           std::size_t kw, std::size_t stride);

/// Cross-correlation of input[B,C,H,W] with kernel[F,C,kh,kw] plus bias[F].
Var conv2d(Var input, Var kernel, Var bias, int stride);

Var relu(Var x);  // subgradient 0 at 0
Var tanh(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, Real factor);
Var add_scalar(Var x, Real offset);
/// Gradient passes where lo <= x <= hi.
Var clamp(Var x, Real lo, Real hi);
/// Elementwise min(x, bound). `bound` has x's shape or x's trailing shape
/// (broadcast over the leading axis); gradient passes where x <= bound.
Var minimum(Var x, const Tensor& bound);
/// Zero gradient everywhere.
Var sign(Var x);
Var abs(Var x);

Var sum(Var x);
Var mean(Var x);
Var reshape(Var x, Shape shape);
/// [B, ...] -> [B, prod(...)].
Var flatten(Var x);
/// Copies the value onto the same tape with no gradient path.
Var detach(Var x);

enum class Reduction { Mean, Sum };

/// Log-sum-exp stabilized cross-entropy of logits[B,K] against labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels,
                          Reduction reduction = Reduction::Mean);
/// Row-wise softmax of x[B,K].
Var softmax(Var x);
/// x[B,K] -> [B] holding column k.
Var select_column(Var x, std::size_t k);
/// log(x + floor).
Var log(Var x, Real floor = Real(0));
/// Euclidean norm of each row of x[B,...] -> [B]; gradient 0 at the origin.
Var row_norm(Var x);
/// Rows of x[B,D] with norm above `radius` are rescaled to norm `radius`.
Var radial_project(Var x, Real radius);

SDPADV_NAMESPACE_END
