#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "wsplin/errors.hpp"

namespace wsplin {

using Shape = std::vector<int64_t>;

// Dense row-major tensor of doubles. Deliberately small: the layers map the
// raw buffer into Eigen matrices for the heavy lifting, everything else is
// plain loops.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

  Tensor reshaped(Shape shape) const {
    if (count(shape) != numel()) {
      throw ShapeError("reshape: element count mismatch");
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  void add_(const Tensor& other) {
    if (other.numel() != numel()) throw ShapeError("add_: size mismatch");
    for (int64_t i = 0; i < numel(); ++i) data_[static_cast<size_t>(i)] += other[i];
  }

  void scale_(double s) {
    for (double& v : data_) v *= s;
  }

  static int64_t count(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  std::string shape_str() const {
    std::string out = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(shape_[i]);
    }
    return out + "]";
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace wsplin
