#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace signet {

// Dimensions of a dense row-major tensor.
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);  // e.g. "3x4"

// Dense n-dimensional array of doubles in row-major order. Plain value type:
// copyable, immutable by convention once handed to a Tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);  // shape {1, n}
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  // Rank-2 accessors; throw DimError on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  // The single scalar value; throws ContractError unless numel() == 1.
  double item() const;

 private:
  Shape shape_;
  std::vector<double> data_;
  std::size_t cols_ = 0;  // cached for rank-2 at()
};

}  // namespace signet
