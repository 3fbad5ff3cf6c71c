#include "tunnel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "tunnel/error.hpp"
#include "tunnel/kernels.hpp"

namespace tunnel {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    fail(ErrorCode::ShapeMismatch, "data length does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    fail(ErrorCode::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || end > shape_[0] || begin > end) fail(ErrorCode::ShapeMismatch, "row range out of bounds");
  const std::size_t stride = shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(s, std::vector<double>(data_.begin() + begin * stride, data_.begin() + end * stride));
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    fail(ErrorCode::ShapeMismatch, shape_string(shape_) + " += " + shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }

Tensor operator-(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) fail(ErrorCode::ShapeMismatch, shape_string(a.shape()) + " - " + shape_string(b.shape()));
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    fail(ErrorCode::ShapeMismatch, "concat_rows " + shape_string(a.shape()) + " + " + shape_string(b.shape()));
  }
  std::vector<double> data(a.values());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor({a.dim(0) + b.dim(0), a.dim(1)}, std::move(data));
}

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) fail(ErrorCode::ShapeMismatch, "transpose expects a matrix");
  Tensor out({m.dim(1), m.dim(0)});
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) out.at(j, i) = m.at(i, j);
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, const Tensor& bias) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0) || (!bias.empty() && bias.size() != b.dim(1))) {
    fail(ErrorCode::ShapeMismatch, "matmul " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  kernels::omp::matmul(a.data(), b.data(), bias.data(), out.data(), a.dim(0), a.dim(1), b.dim(1));
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) { return matmul(transpose(a), b); }

Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul(a, transpose(b)); }

Tensor column_sums(const Tensor& m) {
  Tensor out({m.dim(1)});
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) out[j] += m.at(i, j);
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace tunnel
