#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace reccot::nn {

// Dense row-major matrix of doubles. A row vector is a 1 x n tensor.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2D from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor2D row_vector(std::span<const double> values);
  static Tensor2D identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const noexcept;

  Tensor2D& operator+=(const Tensor2D& other);
  Tensor2D& operator*=(double s) noexcept;

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
// a^T * b without materializing the transpose.
Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b);
// a * b^T without materializing the transpose.
Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b);
Tensor2D transpose(const Tensor2D& a);

// Row-wise softmax with max subtraction.
Tensor2D softmax_rows(const Tensor2D& x);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace reccot::nn
