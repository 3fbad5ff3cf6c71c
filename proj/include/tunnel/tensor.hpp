#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tunnel {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. An empty shape with no data is the "absent" tensor
/// (used for optional biases).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  Tensor reshaped(Shape shape) const;
  /// Row block [begin, end) along the first axis.
  Tensor rows(std::size_t begin, std::size_t end) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);

/// Same shape, zero filled.
Tensor zeros_like(const Tensor& t);

/// Concatenation of 2-D tensors along the first axis.
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
/// (m,k) x (k,n); optional bias of length n.
Tensor matmul(const Tensor& a, const Tensor& b, const Tensor& bias = {});
/// a^T b for a (k,m), b (k,n).
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a b^T for a (m,k), b (n,k).
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// Sum over the first axis of a 2-D tensor.
Tensor column_sums(const Tensor& m);

double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace tunnel
