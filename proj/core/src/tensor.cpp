#include "marlab/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>

namespace {
// Batched training churns through multi-megabyte buffers; above glibc's
// default threshold each one becomes a fresh mmap that the kernel must
// zero. Raising the threshold lets the heap recycle warm pages.
[[maybe_unused]] const bool malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 128 << 20);
  return true;
}();
}  // namespace
#endif

namespace marlab {

int shape_size(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::runtime_error("tensor dims must be positive, got " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_size(shape_) != static_cast<int>(data_.size())) {
    throw std::runtime_error("tensor value count " + std::to_string(data_.size()) + " does not match shape " +
                             shape_to_string(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}


Tensor Tensor::row(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Tensor({n}, std::move(values));
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

int Tensor::offset(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != ndim()) {
    throw std::runtime_error("index rank mismatch for shape " + shape_str());
  }
  int off = 0;
  int i = 0;
  for (int v : idx) {
    if (v < 0 || v >= shape_[static_cast<std::size_t>(i)]) {
      throw std::runtime_error("index out of range for shape " + shape_str());
    }
    off = off * shape_[static_cast<std::size_t>(i)] + v;
    ++i;
  }
  return off;
}

}  // namespace marlab
