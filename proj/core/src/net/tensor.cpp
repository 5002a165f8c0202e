#include "canopyfuse/net/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "canopyfuse/error.hpp"

namespace canopyfuse::net {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::initializer_list<std::size_t> shape, float fill)
    : Tensor(std::vector<std::size_t>(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (product(shape_) != values_.size()) {
    throw ValidationError("tensor shape " + shape_string(shape_) + " does not match " +
                          std::to_string(values_.size()) + " values");
  }
}

void Tensor::fill(float v) noexcept { std::fill(values_.begin(), values_.end(), v); }

void Tensor::add(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ValidationError("tensor add: shape " + shape_string(other.shape_) + " vs " + shape_string(shape_));
  }
  float* dst = values_.data();
  const float* src = other.values_.data();
  for (std::size_t i = 0, n = values_.size(); i < n; ++i) dst[i] += src[i];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const { return {std::move(shape), values_}; }

void Tensor::check_finite(const std::string& where) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw NumericError("non-finite value at index " + std::to_string(i) + " in " + where);
    }
  }
}

bool operator==(const Tensor& lhs, const Tensor& rhs) {
  return lhs.shape_ == rhs.shape_ &&
         std::memcmp(lhs.values_.data(), rhs.values_.data(), lhs.values_.size() * sizeof(float)) == 0;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

}  // namespace canopyfuse::net
