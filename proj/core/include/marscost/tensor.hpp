#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "marscost/errors.hpp"

namespace marscost {

/// Dense row-major float64 tensor. The innermost dimension is contiguous.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0) : shape(std::move(dims)) {
    data.assign(element_count(shape), fill);
  }

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  Tensor zeros_like() const { return Tensor(shape, 0.0); }
  void fill(double v) { data.assign(data.size(), v); }

  void expect_shape(std::initializer_list<std::size_t> dims, const std::string& name) const {
    if (shape != std::vector<std::size_t>(dims)) throw ArgumentError(name + ": unexpected tensor shape");
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// y = x W + b with W stored [in][out].
struct Affine {
  Tensor weight;
  Tensor bias;

  Affine() = default;
  Affine(std::size_t in, std::size_t out) : weight({in, out}), bias({out}) {}

  std::size_t in_dim() const { return weight.shape.empty() ? 0 : weight.dim(0); }
  std::size_t out_dim() const { return bias.shape.empty() ? 0 : bias.dim(0); }

  friend bool operator==(const Affine&, const Affine&) = default;
};

}  // namespace marscost
