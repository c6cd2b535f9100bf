#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace marlab {

// Dense row-major tensor of doubles. Shapes are small (desk-scale models),
// so everything stays on the heap with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor row(std::vector<double> values);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(std::initializer_list<int> idx) { return data_[static_cast<std::size_t>(offset(idx))]; }
  double at(std::initializer_list<int> idx) const { return data_[static_cast<std::size_t>(offset(idx))]; }

  void fill(double value);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const;

 private:
  int offset(std::initializer_list<int> idx) const;

  std::vector<int> shape_;
  std::vector<double> data_;
};

int shape_size(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

}  // namespace marlab
