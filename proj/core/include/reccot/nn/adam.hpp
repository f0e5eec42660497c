#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reccot/nn/layers.hpp"

namespace reccot::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. Moment buffers are bound to the parameter list on the
// first step; later calls must pass parameters of the same shapes in the same
// order. Sparse parameters update only their touched rows (lazy Adam), using
// the global step count for bias correction.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<Parameter* const> params);

  const AdamConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  std::uint64_t steps() const { return step_; }
  const std::vector<Tensor2D>& first_moments() const { return m_; }
  const std::vector<Tensor2D>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<Tensor2D> m_;
  std::vector<Tensor2D> v_;
};

// Convenience for flat vectors (policies, grad-check harnesses).
struct FlatAdam {
  explicit FlatAdam(AdamConfig cfg = {}) : cfg(cfg) {}
  // Applies one ascent (sign = +1) or descent (sign = -1) step in place.
  void step(std::span<double> params, std::span<const double> grads, double sign = -1.0);

  AdamConfig cfg;
  std::uint64_t t = 0;
  std::vector<double> m;
  std::vector<double> v;
};

}  // namespace reccot::nn
