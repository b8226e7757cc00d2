#include "sdpadv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "sdpadv/error.hpp"

SDPADV_NAMESPACE_BEGIN

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, Real fill)
    : shape_(std::move(shape)), data_(numel(shape_), fill) {
  for (auto d : shape_)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (auto d : shape_)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape_));
  if (numel(shape_) != data_.size())
    throw DimensionError("shape " + to_string(shape_) + " needs " +
                         std::to_string(numel(shape_)) + " elements, got " +
                         std::to_string(data_.size()));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape_));
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (numel(shape) != data_.size())
    throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (rank() == 0 || begin >= end || end > shape_[0])
    throw DimensionError("bad row slice [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") of " + to_string(shape_));
  const std::size_t row = data_.size() / shape_[0];
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s), std::vector<Real>(data_.begin() + begin * row,
                                                data_.begin() + end * row));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](Real v) { return std::isfinite(v); });
}

void Tensor::fill(Real value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Shape shape = parts[0].shape();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1))
      throw DimensionError("concat_rows: trailing dims differ, " + to_string(p.shape()) +
                           " vs " + to_string(shape));
    rows += p.shape()[0];
  }
  shape[0] = rows;
  std::vector<Real> data;
  data.reserve(numel(shape));
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor(std::move(shape), std::move(data));
}

Real max_abs(const Tensor& t) noexcept {
  Real m = 0;
  for (Real v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

void tune_allocator() {
#if defined(__GLIBC__)
  constexpr int kThreshold = 1 << 30;
  mallopt(M_MMAP_THRESHOLD, kThreshold);
  mallopt(M_TRIM_THRESHOLD, kThreshold);
#endif
}

SDPADV_NAMESPACE_END
