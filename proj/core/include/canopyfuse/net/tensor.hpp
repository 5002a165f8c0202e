#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace canopyfuse::net {

/// Dense row-major float32 array.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::initializer_list<std::size_t> shape, float fill = 0.0f);
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  float* data() noexcept { return values_.data(); }
  const float* data() const noexcept { return values_.data(); }
  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }

  // Rank-3 (C,H,W) element access.
  float& at(std::size_t c, std::size_t y, std::size_t x) { return values_[(c * shape_[1] + y) * shape_[2] + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// Pointer to channel `c` of a rank-3 tensor, or to the `c`-th leading slice in general.
  float* slice(std::size_t c) noexcept { return values_.data() + c * (values_.size() / shape_[0]); }
  const float* slice(std::size_t c) const noexcept { return values_.data() + c * (values_.size() / shape_[0]); }

  void fill(float v) noexcept;
  void add(const Tensor& other);
  Tensor reshaped(std::vector<std::size_t> shape) const;

  /// Throws NumericError naming `where` if any value is NaN or Inf.
  void check_finite(const std::string& where) const;

  /// Bitwise equality of shape and payload.
  friend bool operator==(const Tensor& lhs, const Tensor& rhs);

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace canopyfuse::net
