// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPIKELITE_TENSOR_H_
#define SPIKELITE_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikelite {

// Failure categories. The CLI maps these onto its exit codes.
enum class ErrorCode {
  kDimension,        // shape mismatch
  kEmptyInput,       // zero-length sequence or list
  kInvalidArgument,  // out-of-range parameter (window, chunk, k, ...)
  kDomain,           // value outside the mathematical domain (gates, schemes)
  kOverflow,         // integer range exceeded
  kNonFinite,        // NaN/Inf in an input that must be finite
  kFormat,           // malformed file or document
  kIo,               // filesystem failure
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

using Shape = std::vector<std::size_t>;

std::size_t ShapeSize(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Dense row-major float32 array. Value type; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<float> data);

  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor Full(Shape shape, float value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  float at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  float& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  float at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Contiguous trailing slice selected by the leading indices.
  std::span<float> slice(std::initializer_list<std::size_t> lead);
  std::span<const float> slice(std::initializer_list<std::size_t> lead) const;

  Tensor Reshaped(Shape shape) const;

  bool AllFinite() const;
  void RequireFinite(const char* what) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t Offset(std::initializer_list<std::size_t> lead) const;

  Shape shape_;
  std::vector<float> data_;
};

// y[out] = W[out, in] * x[in]
void MatVec(const Tensor& w, std::span<const float> x, std::span<float> y);
// [n, in] -> [n, out] with W stored [out, in].
Tensor Linear(const Tensor& w, const Tensor& x);

// RMS normalization of each length-`width` group; optional gain of that width.
void RmsNormInPlace(std::span<float> x, std::size_t width, float eps = 1e-6f,
                    std::span<const float> gain = {});

// max|a-b| / max|b|, the normwise relative error used by every tolerance
// check in the project. Returns max|a-b| when b is all zero.
double MaxRelativeError(std::span<const float> a, std::span<const float> b);

}  // namespace spikelite

#endif  // SPIKELITE_TENSOR_H_
