#include "reccot/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "reccot/error.hpp"

namespace reccot::nn {

namespace {

std::string shape_str(const Tensor2D& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Tensor2D Tensor2D::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged initializer for Tensor2D");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor2D(r, c, std::move(data));
}

Tensor2D Tensor2D::row_vector(std::span<const double> values) {
  return Tensor2D(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2D Tensor2D::identity(std::size_t n) {
  Tensor2D t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

void Tensor2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2D::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2D& Tensor2D::operator+=(const Tensor2D& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) {
    throw ShapeError("cannot add " + shape_str(other) + " to " + shape_str(*this));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor2D& Tensor2D::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a) + " * " + shape_str(b));
  }
  Tensor2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn shape mismatch: " + shape_str(a) + "^T * " + shape_str(b));
  }
  Tensor2D out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto a_row = a.row(k);
    const auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt shape mismatch: " + shape_str(a) + " * " + shape_str(b) + "^T");
  }
  Tensor2D out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

Tensor2D transpose(const Tensor2D& a) {
  Tensor2D out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Tensor2D softmax_rows(const Tensor2D& x) {
  Tensor2D out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot product of unequal lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("distance between unequal lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace reccot::nn
