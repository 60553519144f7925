// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace spikelite {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kOverflow: return "overflow";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

std::size_t ShapeSize(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (ShapeSize(shape_) != data_.size()) {
    throw Error(ErrorCode::kDimension,
                "tensor shape " + ShapeString(shape_) + " does not hold " +
                    std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::Full(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw Error(ErrorCode::kDimension, "axis " + std::to_string(axis) +
                                           " out of range for shape " +
                                           ShapeString(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::Offset(std::initializer_list<std::size_t> lead) const {
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t idx : lead) {
    offset = offset * shape_[axis] + idx;
    ++axis;
  }
  for (; axis < shape_.size(); ++axis) offset *= shape_[axis];
  return offset;
}

std::span<float> Tensor::slice(std::initializer_list<std::size_t> lead) {
  std::size_t width = 1;
  for (std::size_t axis = lead.size(); axis < shape_.size(); ++axis)
    width *= shape_[axis];
  return std::span<float>(data_).subspan(Offset(lead), width);
}

std::span<const float> Tensor::slice(
    std::initializer_list<std::size_t> lead) const {
  std::size_t width = 1;
  for (std::size_t axis = lead.size(); axis < shape_.size(); ++axis)
    width *= shape_[axis];
  return std::span<const float>(data_).subspan(Offset(lead), width);
}

Tensor Tensor::Reshaped(Shape shape) const { return Tensor(shape, data_); }

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

void Tensor::RequireFinite(const char* what) const {
  if (!AllFinite()) {
    throw Error(ErrorCode::kNonFinite,
                std::string(what) + " contains non-finite values");
  }
}

void MatVec(const Tensor& w, std::span<const float> x, std::span<float> y) {
  const std::size_t rows = w.dim(0);
  const std::size_t cols = w.dim(1);
  if (x.size() != cols || y.size() != rows) {
    throw Error(ErrorCode::kDimension,
                "matvec: weight " + ShapeString(w.shape()) + " vs input " +
                    std::to_string(x.size()) + " / output " +
                    std::to_string(y.size()));
  }
  const float* wp = w.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = wp + r * cols;
    float acc = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

Tensor Linear(const Tensor& w, const Tensor& x) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
    throw Error(ErrorCode::kDimension, "linear: weight " +
                                           ShapeString(w.shape()) +
                                           " vs input " + ShapeString(x.shape()));
  }
  Tensor y({x.dim(0), w.dim(0)});
  for (std::size_t i = 0; i < x.dim(0); ++i)
    MatVec(w, x.slice({i}), y.slice({i}));
  return y;
}

void RmsNormInPlace(std::span<float> x, std::size_t width, float eps,
                    std::span<const float> gain) {
  if (width == 0 || x.size() % width != 0) {
    throw Error(ErrorCode::kDimension, "rms norm: group width " +
                                           std::to_string(width) +
                                           " does not divide " +
                                           std::to_string(x.size()));
  }
  if (!gain.empty() && gain.size() != width) {
    throw Error(ErrorCode::kDimension, "rms norm: gain width mismatch");
  }
  for (std::size_t start = 0; start < x.size(); start += width) {
    float ss = 0.0f;
    for (std::size_t i = 0; i < width; ++i) ss += x[start + i] * x[start + i];
    const float ms = ss / static_cast<float>(width) + eps;
    // An all-zero group with eps 0 stays zero instead of turning into NaN.
    const float inv = ms > 0.0f ? 1.0f / std::sqrt(ms) : 0.0f;
    for (std::size_t i = 0; i < width; ++i) {
      x[start + i] *= inv;
      if (!gain.empty()) x[start + i] *= gain[i];
    }
  }
}

double MaxRelativeError(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimension, "relative error: length mismatch");
  }
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - b[i]));
    ref = std::max(ref, std::abs(static_cast<double>(b[i])));
  }
  return ref > 0.0 ? diff / ref : diff;
}

}  // namespace spikelite
