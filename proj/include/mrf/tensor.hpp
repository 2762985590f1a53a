#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mrf/errors.hpp"

namespace mrf {

using cplx = std::complex<double>;

// Dense row-major tensor.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    data_.assign(numel_from_dims(dims_), T{});
  }

  Tensor(std::vector<std::size_t> dims, std::vector<T> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != numel_from_dims(dims_))
      throw ConfigError("tensor data size does not match dims");
  }

  static std::size_t numel_from_dims(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t ndim() const { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  std::size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }

  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<T> data_;
};

using TensorR = Tensor<double>;
using TensorC = Tensor<cplx>;

}  // namespace mrf
