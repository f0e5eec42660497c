#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "reccot/nn/tensor.hpp"

namespace reccot::nn {

// A trainable tensor with its gradient accumulator.
//
// Sparse parameters (embedding tables) record the rows written by backward
// passes in `touched`; the optimizer then updates only those rows.
struct Parameter {
  std::string name;
  Tensor2D value;
  Tensor2D grad;
  bool sparse_rows = false;
  std::vector<std::size_t> touched;

  Parameter() = default;
  Parameter(std::string n, std::size_t rows, std::size_t cols, bool sparse = false);

  void zero_grad();
  void touch(std::size_t r);
};

using Rng = std::mt19937_64;

// SplitMix64-style combination of a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

void init_uniform(Tensor2D& t, double limit, Rng& rng);
void init_normal(Tensor2D& t, double stddev, Rng& rng);

// y = x W + b, with W in x out and b 1 x out.
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out);

  std::size_t in() const { return weight.value.rows(); }
  std::size_t out() const { return weight.value.cols(); }

  void init_xavier(Rng& rng);
  Tensor2D forward(const Tensor2D& x) const;
  // Accumulates weight/bias gradients and returns dL/dx.
  Tensor2D backward(const Tensor2D& x, const Tensor2D& d_out);

  Parameter weight;
  Parameter bias;
};

Tensor2D tanh(const Tensor2D& x);
// Given y = tanh(x) and dL/dy, returns dL/dx.
Tensor2D tanh_backward(const Tensor2D& y, const Tensor2D& d_y);

Tensor2D hadamard(const Tensor2D& a, const Tensor2D& b);

// Inverted-dropout mask: entries are 0 with probability `rate`, otherwise
// 1 / (1 - rate). rate = 0 yields an all-ones mask.
Tensor2D dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

// Mean squared error over matching shapes, and its gradient w.r.t. pred.
double mse(const Tensor2D& pred, const Tensor2D& target);
Tensor2D mse_grad(const Tensor2D& pred, const Tensor2D& target);

}  // namespace reccot::nn
