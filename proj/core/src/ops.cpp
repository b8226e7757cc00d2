#include "sdpadv/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sdpadv/error.hpp"

SDPADV_NAMESPACE_BEGIN

namespace {

using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using ColMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using ColMap = Eigen::Map<ColMatrix>;
using ConstColMap = Eigen::Map<const ColMatrix>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": operand shapes differ, " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
}

void accumulate(Tensor& dst, const Tensor& src) {
  Real* d = dst.ptr();
  const Real* s = src.ptr();
  for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
}

template <class F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  const Real* in = x.ptr();
  Real* o = out.ptr();
  for (std::size_t i = 0, n = x.size(); i < n; ++i) o[i] = f(in[i]);
  return out;
}

// Unary op whose local derivative depends on input value and output value.
template <class Fwd, class Deriv>
Var unary(OpKind kind, Var x, Fwd fwd, Deriv deriv) {
  Tape& tape = x.tape();
  Tensor out = map_values(x.value(), fwd);
  return tape.record(kind, std::move(out), {x}, [x, deriv](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    const Real* in = t.value(x).ptr();
    Tensor& dx = t.grad_of(x);
    Real* d = dx.ptr();
    const Real* gp = g.ptr();
    for (std::size_t i = 0, n = dx.size(); i < n; ++i) d[i] += gp[i] * deriv(in[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------- dense

Var dense(Var input, Var weight, Var bias) {
  Tape& tape = same_tape(input, weight);
  same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw DimensionError("dense: expected input[B,I], weight[I,O], bias[O], got " +
                         to_string(x.shape()) + ", " + to_string(w.shape()) + ", " +
                         to_string(b.shape()));
  const std::size_t B = x.dim(0), I = x.dim(1), O = w.dim(1);
  if (w.dim(0) != I)
    throw DimensionError("dense: input axis 1 (" + std::to_string(I) + ") != weight axis 0 (" +
                         std::to_string(w.dim(0)) + ")");
  if (b.dim(0) != O)
    throw DimensionError("dense: bias axis 0 (" + std::to_string(b.dim(0)) +
                         ") != weight axis 1 (" + std::to_string(O) + ")");

  Tensor out({B, O});
  MatrixMap y(out.ptr(), B, O);
  y.noalias() = ConstMatrixMap(x.ptr(), B, I) * ConstMatrixMap(w.ptr(), I, O);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(b.ptr(), O);

  return tape.record(OpKind::Dense, std::move(out), {input, weight, bias},
                     [input, weight, bias, B, I, O](Tape& t, const Tensor& g) {
                       ConstMatrixMap gy(g.ptr(), B, O);
                       if (t.requires_grad(input)) {
                         MatrixMap dx(t.grad_of(input).ptr(), B, I);
                         dx.noalias() += gy * ConstMatrixMap(t.value(weight).ptr(), I, O).transpose();
                       }
                       if (t.requires_grad(weight)) {
                         MatrixMap dw(t.grad_of(weight).ptr(), I, O);
                         dw.noalias() += ConstMatrixMap(t.value(input).ptr(), B, I).transpose() * gy;
                       }
                       if (t.requires_grad(bias)) {
                         Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>> db(t.grad_of(bias).ptr(), O);
                         db += gy.colwise().sum();
                       }
                     });
}

// ---------------------------------------------------------------- conv2d

ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kh, std::size_t kw,
                           std::size_t stride) {
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const auto pad = [&](std::size_t out, std::size_t in, std::size_t k) -> std::size_t {
    const std::ptrdiff_t need = std::ptrdiff_t((out - 1) * stride + k) - std::ptrdiff_t(in);
    return need > 0 ? std::size_t(need) : 0;
  };
  const std::size_t ph = pad(g.out_h, in_h, kh), pw = pad(g.out_w, in_w, kw);
  if (kh > in_h + ph || kw > in_w + pw) throw DimensionError("conv2d: kernel larger than padded input");
  g.pad_top = ph / 2;
  g.pad_left = pw / 2;
  return g;
}

namespace {

struct ConvDims {
  std::size_t B, C, H, W, F, kh, kw, stride;
  ConvGeometry geo;
  std::size_t rows() const { return B * geo.out_h * geo.out_w; }
  std::size_t cols() const { return C * kh * kw; }
};

// Valid output range [lo, hi) for kernel offset k along one axis.
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t pad,
                                                std::size_t k, std::size_t stride) {
  // need 0 <= o*stride - pad + k < in
  const std::ptrdiff_t off = std::ptrdiff_t(k) - std::ptrdiff_t(pad);
  std::ptrdiff_t lo = off >= 0 ? 0 : (-off + std::ptrdiff_t(stride) - 1) / std::ptrdiff_t(stride);
  std::ptrdiff_t hi = std::ptrdiff_t(in) - off <= 0
                          ? 0
                          : (std::ptrdiff_t(in) - off - 1) / std::ptrdiff_t(stride) + 1;
  lo = std::min<std::ptrdiff_t>(lo, std::ptrdiff_t(out));
  hi = std::clamp<std::ptrdiff_t>(hi, lo, std::ptrdiff_t(out));
  return {std::size_t(lo), std::size_t(hi)};
}

// cols[(c,ky,kx), (b,oy,ox)] = zero-padded input sample.
void im2col(const ConvDims& d, const Real* in, Real* cols) {
  const std::size_t OH = d.geo.out_h, OW = d.geo.out_w, R = d.rows();
  for (std::size_t c = 0; c < d.C; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      const auto [ylo, yhi] = valid_range(OH, d.H, d.geo.pad_top, ky, d.stride);
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const auto [xlo, xhi] = valid_range(OW, d.W, d.geo.pad_left, kx, d.stride);
        Real* row = cols + ((c * d.kh + ky) * d.kw + kx) * R;
        for (std::size_t b = 0; b < d.B; ++b) {
          const Real* plane = in + (b * d.C + c) * d.H * d.W;
          Real* out = row + b * OH * OW;
          std::fill(out, out + ylo * OW, Real(0));
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const Real* src = plane + (oy * d.stride + ky - d.geo.pad_top) * d.W + kx - d.geo.pad_left;
            Real* dst = out + oy * OW;
            std::fill(dst, dst + xlo, Real(0));
            for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox] = src[ox * d.stride];
            std::fill(dst + xhi, dst + OW, Real(0));
          }
          std::fill(out + yhi * OW, out + OH * OW, Real(0));
        }
      }
    }
}

void col2im(const ConvDims& d, const Real* cols, Real* in_grad) {
  const std::size_t OH = d.geo.out_h, OW = d.geo.out_w, R = d.rows();
  for (std::size_t c = 0; c < d.C; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      const auto [ylo, yhi] = valid_range(OH, d.H, d.geo.pad_top, ky, d.stride);
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const auto [xlo, xhi] = valid_range(OW, d.W, d.geo.pad_left, kx, d.stride);
        const Real* row = cols + ((c * d.kh + ky) * d.kw + kx) * R;
        for (std::size_t b = 0; b < d.B; ++b) {
          Real* plane = in_grad + (b * d.C + c) * d.H * d.W;
          const Real* src_rows = row + b * OH * OW;
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            Real* dst = plane + (oy * d.stride + ky - d.geo.pad_top) * d.W + kx - d.geo.pad_left;
            const Real* src = src_rows + oy * OW;
            for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox * d.stride] += src[ox];
          }
        }
      }
    }
}

}  // namespace

Var conv2d(Var input, Var kernel, Var bias, int stride) {
  if (stride <= 0) throw ConfigError("conv2d: stride must be positive, got " + std::to_string(stride));
  Tape& tape = same_tape(input, kernel);
  same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  const Tensor& b = bias.value();
  if (x.rank() != 4 || k.rank() != 4 || b.rank() != 1)
    throw DimensionError("conv2d: expected input[B,C,H,W], kernel[F,C,kh,kw], bias[F], got " +
                         to_string(x.shape()) + ", " + to_string(k.shape()) + ", " +
                         to_string(b.shape()));
  if (k.dim(1) != x.dim(1))
    throw DimensionError("conv2d: input axis 1 (" + std::to_string(x.dim(1)) +
                         ") != kernel axis 1 (" + std::to_string(k.dim(1)) + ")");
  if (b.dim(0) != k.dim(0))
    throw DimensionError("conv2d: bias axis 0 (" + std::to_string(b.dim(0)) +
                         ") != kernel axis 0 (" + std::to_string(k.dim(0)) + ")");

  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3),
             std::size_t(stride), {}};
  d.geo = conv_geometry(d.H, d.W, d.kh, d.kw, d.stride);
  const std::size_t R = d.rows(), Q = d.cols(), P = d.geo.out_h * d.geo.out_w;

  // The im2col buffer is kept for the kernel gradient when one is needed.
  auto cols = std::make_shared<Matrix>(Q, R);
  im2col(d, x.ptr(), cols->data());
  // Column-major views: cols is [R,Q], the kernel is [Q,F], prod is [R,F]
  // (i.e. row-major [F,R]).
  Matrix prod(d.F, R);
  ColMap(prod.data(), R, d.F).noalias() =
      ConstColMap(cols->data(), R, Q) * ConstColMap(k.ptr(), Q, d.F);
  if (!kernel.requires_grad()) cols.reset();

  Tensor out({d.B, d.F, d.geo.out_h, d.geo.out_w});
  Real* o = out.ptr();
  for (std::size_t bi = 0; bi < d.B; ++bi)
    for (std::size_t f = 0; f < d.F; ++f) {
      const Real bf = b[f];
      const Real* src = prod.data() + f * R + bi * P;
      Real* dst = o + (bi * d.F + f) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bf;
    }

  return tape.record(OpKind::Conv2d, std::move(out), {input, kernel, bias},
                     [input, kernel, bias, d, cols](Tape& t, const Tensor& g) {
                       const std::size_t R = d.rows(), Q = d.cols(),
                                         P = d.geo.out_h * d.geo.out_w;
                       Matrix gm(d.F, R);
                       const Real* gp = g.ptr();
                       for (std::size_t bi = 0; bi < d.B; ++bi)
                         for (std::size_t f = 0; f < d.F; ++f)
                           std::copy_n(gp + (bi * d.F + f) * P, P, gm.data() + f * R + bi * P);
                       if (t.requires_grad(bias)) {
                         Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>> db(t.grad_of(bias).ptr(), d.F);
                         db += gm.rowwise().sum();
                       }
                       if (t.requires_grad(kernel)) {
                         ColMap(t.grad_of(kernel).ptr(), Q, d.F).noalias() +=
                             ConstColMap(cols->data(), R, Q).transpose() * ConstColMap(gm.data(), R, d.F);
                       }
                       if (t.requires_grad(input)) {
                         Matrix dcols(Q, R);
                         ColMap(dcols.data(), R, Q).noalias() =
                             ConstColMap(gm.data(), R, d.F) *
                             ConstColMap(t.value(kernel).ptr(), Q, d.F).transpose();
                         col2im(d, dcols.data(), t.grad_of(input).ptr());
                       }
                     });
}

// ---------------------------------------------------------------- elementwise

Var relu(Var x) {
  return unary(
      OpKind::Relu, x, [](Real v) { return v > 0 ? v : Real(0); },
      [](Real v) { return v > 0 ? Real(1) : Real(0); });
}

Var tanh(Var x) {
  return unary(
      OpKind::Tanh, x, [](Real v) { return std::tanh(v); },
      [](Real v) {
        const Real th = std::tanh(v);
        return Real(1) - th * th;
      });
}

Var scale(Var x, Real factor) {
  return unary(
      OpKind::Scale, x, [factor](Real v) { return v * factor; },
      [factor](Real) { return factor; });
}

Var add_scalar(Var x, Real offset) {
  return unary(
      OpKind::AddScalar, x, [offset](Real v) { return v + offset; }, [](Real) { return Real(1); });
}

Var clamp(Var x, Real lo, Real hi) {
  if (lo > hi) throw ConfigError("clamp: lo > hi");
  return unary(
      OpKind::Clamp, x, [lo, hi](Real v) { return std::clamp(v, lo, hi); },
      [lo, hi](Real v) { return (v >= lo && v <= hi) ? Real(1) : Real(0); });
}

Var sign(Var x) {
  return unary(
      OpKind::Sign, x, [](Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); },
      [](Real) { return Real(0); });
}

Var abs(Var x) {
  return unary(
      OpKind::Abs, x, [](Real v) { return std::abs(v); },
      [](Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

Var minimum(Var x, const Tensor& bound) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.size(), period = bound.size();
  const bool same = bound.shape() == xv.shape();
  const bool trailing = xv.rank() >= 1 && bound.rank() == xv.rank() - 1 &&
                        std::equal(bound.shape().begin(), bound.shape().end(), xv.shape().begin() + 1);
  if (!same && !trailing)
    throw DimensionError("minimum: bound shape " + to_string(bound.shape()) +
                         " does not broadcast to " + to_string(xv.shape()));
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) out[i] = std::min(xv[i], bound[i % period]);
  return x.tape().record(OpKind::Minimum, std::move(out), {x}, [x, bound](Tape& t, const Tensor& g) {
    const Tensor& v = t.value(x);
    Tensor& dx = t.grad_of(x);
    const std::size_t period = bound.size();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (v[i] <= bound[i % period]) dx[i] += g[i];
  });
}

namespace {

enum class Binary { Add, Sub, Mul };

Var binary(Binary op, Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  static constexpr const char* names[] = {"add", "sub", "mul"};
  require_same_shape(names[int(op)], av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case Binary::Add: out[i] = av[i] + bv[i]; break;
      case Binary::Sub: out[i] = av[i] - bv[i]; break;
      case Binary::Mul: out[i] = av[i] * bv[i]; break;
    }
  }
  const OpKind kind = op == Binary::Add ? OpKind::Add : op == Binary::Sub ? OpKind::Sub : OpKind::Mul;
  return tape.record(kind, std::move(out), {a, b}, [op, a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      Tensor& da = t.grad_of(a);
      if (op == Binary::Mul) {
        const Tensor& bv = t.value(b);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
      } else {
        accumulate(da, g);
      }
    }
    if (t.requires_grad(b)) {
      Tensor& db = t.grad_of(b);
      if (op == Binary::Mul) {
        const Tensor& av = t.value(a);
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
      } else if (op == Binary::Sub) {
        for (std::size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
      } else {
        accumulate(db, g);
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(Binary::Add, a, b); }
Var sub(Var a, Var b) { return binary(Binary::Sub, a, b); }
Var mul(Var a, Var b) { return binary(Binary::Mul, a, b); }

// ---------------------------------------------------------------- reductions

Var sum(Var x) {
  const Tensor& v = x.value();
  double acc = 0;
  for (Real e : v.data()) acc += e;
  return x.tape().record(OpKind::Sum, Tensor({1}, Real(acc)), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_of(x);
    for (auto& e : dx.data()) e += g[0];
  });
}

Var mean(Var x) {
  const Tensor& v = x.value();
  double acc = 0;
  for (Real e : v.data()) acc += e;
  const Real inv = Real(1) / Real(v.size());
  return x.tape().record(OpKind::Mean, Tensor({1}, Real(acc / double(v.size()))), {x},
                         [x, inv](Tape& t, const Tensor& g) {
                           Tensor& dx = t.grad_of(x);
                           for (auto& e : dx.data()) e += g[0] * inv;
                         });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(OpKind::Reshape, std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    accumulate(t.grad_of(x), g);
  });
}

Var flatten(Var x) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("flatten: rank-0 tensor");
  return reshape(x, {s[0], numel(s) / s[0]});
}

Var detach(Var x) { return x.tape().constant(x.value()); }

// ---------------------------------------------------------------- classification

Var softmax_cross_entropy(Var logits, std::span<const int> labels, Reduction reduction) {
  const Tensor& z = logits.value();
  if (z.rank() != 2)
    throw DimensionError("softmax_cross_entropy: expected logits[B,K], got " + to_string(z.shape()));
  const std::size_t B = z.dim(0), K = z.dim(1);
  if (labels.size() != B)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch axis 0 of " + std::to_string(B));
  for (std::size_t i = 0; i < B; ++i)
    if (labels[i] < 0 || std::size_t(labels[i]) >= K)
      throw IndexError("label " + std::to_string(labels[i]) + " at position " + std::to_string(i) +
                       " outside [0," + std::to_string(K) + ")");

  Tensor probs({B, K});
  double total = 0;
  for (std::size_t i = 0; i < B; ++i) {
    const Real* row = z.ptr() + i * K;
    Real* p = probs.ptr() + i * K;
    const Real m = *std::max_element(row, row + K);
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(double(row[k] - m));
    const double lse = double(m) + std::log(s);
    total += lse - double(row[labels[i]]);
    for (std::size_t k = 0; k < K; ++k) p[k] = Real(std::exp(double(row[k]) - lse));
  }
  const Real factor = reduction == Reduction::Mean ? Real(1) / Real(B) : Real(1);
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape().record(
      OpKind::SoftmaxCrossEntropy, Tensor({1}, Real(total) * factor), {logits},
      [logits, probs = std::move(probs), ys = std::move(ys), factor, K](Tape& t, const Tensor& g) {
        Tensor& dz = t.grad_of(logits);
        const Real s = g[0] * factor;
        for (std::size_t i = 0; i < ys.size(); ++i)
          for (std::size_t k = 0; k < K; ++k) {
            const Real onehot = std::size_t(ys[i]) == k ? Real(1) : Real(0);
            dz[i * K + k] += s * (probs[i * K + k] - onehot);
          }
      });
}

Var softmax(Var x) {
  const Tensor& z = x.value();
  if (z.rank() != 2) throw DimensionError("softmax: expected [B,K], got " + to_string(z.shape()));
  const std::size_t B = z.dim(0), K = z.dim(1);
  Tensor out({B, K});
  for (std::size_t i = 0; i < B; ++i) {
    const Real* row = z.ptr() + i * K;
    Real* o = out.ptr() + i * K;
    const Real m = *std::max_element(row, row + K);
    Real s = 0;
    for (std::size_t k = 0; k < K; ++k) s += (o[k] = std::exp(row[k] - m));
    for (std::size_t k = 0; k < K; ++k) o[k] /= s;
  }
  Tensor saved = out;
  return x.tape().record(OpKind::Softmax, std::move(out), {x},
                         [x, s = std::move(saved), B, K](Tape& t, const Tensor& g) {
                           Tensor& dx = t.grad_of(x);
                           for (std::size_t i = 0; i < B; ++i) {
                             Real dot = 0;
                             for (std::size_t k = 0; k < K; ++k) dot += g[i * K + k] * s[i * K + k];
                             for (std::size_t k = 0; k < K; ++k)
                               dx[i * K + k] += s[i * K + k] * (g[i * K + k] - dot);
                           }
                         });
}

Var select_column(Var x, std::size_t k) {
  const Tensor& z = x.value();
  if (z.rank() != 2 || k >= z.dim(1))
    throw IndexError("select_column: column " + std::to_string(k) + " of " + to_string(z.shape()));
  const std::size_t B = z.dim(0), K = z.dim(1);
  Tensor out({B});
  for (std::size_t i = 0; i < B; ++i) out[i] = z[i * K + k];
  return x.tape().record(OpKind::SelectColumn, std::move(out), {x},
                         [x, k, B, K](Tape& t, const Tensor& g) {
                           Tensor& dx = t.grad_of(x);
                           for (std::size_t i = 0; i < B; ++i) dx[i * K + k] += g[i];
                         });
}

Var log(Var x, Real floor) {
  for (Real v : x.value().data())
    if (!(v + floor > 0)) throw NumericError("log: argument not positive");
  return unary(
      OpKind::Log, x, [floor](Real v) { return std::log(v + floor); },
      [floor](Real v) { return Real(1) / (v + floor); });
}

Var row_norm(Var x) {
  const Tensor& v = x.value();
  if (v.rank() < 1) throw DimensionError("row_norm: rank-0 tensor");
  const std::size_t B = v.dim(0), D = v.size() / B;
  Tensor out({B});
  for (std::size_t i = 0; i < B; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < D; ++j) s += double(v[i * D + j]) * double(v[i * D + j]);
    out[i] = Real(std::sqrt(s));
  }
  Tensor norms = out;
  return x.tape().record(OpKind::RowNorm, std::move(out), {x},
                         [x, norms = std::move(norms), B, D](Tape& t, const Tensor& g) {
                           const Tensor& v = t.value(x);
                           Tensor& dx = t.grad_of(x);
                           for (std::size_t i = 0; i < B; ++i) {
                             if (norms[i] == 0) continue;
                             const Real s = g[i] / norms[i];
                             for (std::size_t j = 0; j < D; ++j) dx[i * D + j] += s * v[i * D + j];
                           }
                         });
}

Var radial_project(Var x, Real radius) {
  if (radius < 0) throw ConfigError("radial_project: negative radius");
  const Tensor& v = x.value();
  if (v.rank() != 2) throw DimensionError("radial_project: expected [B,D], got " + to_string(v.shape()));
  const std::size_t B = v.dim(0), D = v.dim(1);
  Tensor out = v;
  Tensor norms({B});
  for (std::size_t i = 0; i < B; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < D; ++j) s += double(v[i * D + j]) * double(v[i * D + j]);
    norms[i] = Real(std::sqrt(s));
    if (norms[i] > radius) {
      const Real f = radius / norms[i];
      for (std::size_t j = 0; j < D; ++j) out[i * D + j] = v[i * D + j] * f;
    }
  }
  return x.tape().record(
      OpKind::RadialProject, std::move(out), {x},
      [x, norms = std::move(norms), radius, B, D](Tape& t, const Tensor& g) {
        const Tensor& v = t.value(x);
        Tensor& dx = t.grad_of(x);
        for (std::size_t i = 0; i < B; ++i) {
          const Real n = norms[i];
          if (!(n > radius)) {
            for (std::size_t j = 0; j < D; ++j) dx[i * D + j] += g[i * D + j];
            continue;
          }
          // d(r x/|x|) = (r/|x|)(I - u u^T), u = x/|x|
          Real ug = 0;
          for (std::size_t j = 0; j < D; ++j) ug += v[i * D + j] * g[i * D + j];
          ug /= n;
          const Real f = radius / n;
          for (std::size_t j = 0; j < D; ++j)
            dx[i * D + j] += f * (g[i * D + j] - (v[i * D + j] / n) * ug);
        }
      });
}

SDPADV_NAMESPACE_END
