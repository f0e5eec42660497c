#include "reccot/nn/layers.hpp"

#include <cmath>

#include "reccot/error.hpp"

namespace reccot::nn {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}


Parameter::Parameter(std::string n, std::size_t rows, std::size_t cols, bool sparse)
    : name(std::move(n)), value(rows, cols), grad(rows, cols), sparse_rows(sparse) {}

void Parameter::zero_grad() {
  if (sparse_rows) {
    for (std::size_t r : touched) {
      for (double& g : grad.row(r)) g = 0.0;
    }
  } else {
    grad.fill(0.0);
  }
  touched.clear();
}

void Parameter::touch(std::size_t r) { touched.push_back(r); }

void init_uniform(Tensor2D& t, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values()) v = dist(rng);
}

void init_normal(Tensor2D& t, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
}

Dense::Dense(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {}

void Dense::init_xavier(Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in() + out()));
  init_uniform(weight.value, limit, rng);
  bias.value.fill(0.0);
}

Tensor2D Dense::forward(const Tensor2D& x) const {
  Tensor2D y = matmul(x, weight.value);
  const auto b = bias.value.row(0);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  return y;
}

Tensor2D Dense::backward(const Tensor2D& x, const Tensor2D& d_out) {
  weight.grad += matmul_tn(x, d_out);
  auto db = bias.grad.row(0);
  for (std::size_t r = 0; r < d_out.rows(); ++r) {
    const auto row = d_out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
  }
  return matmul_nt(d_out, weight.value);
}

Tensor2D tanh(const Tensor2D& x) {
  Tensor2D y = x;
  for (double& v : y.values()) v = std::tanh(v);
  return y;
}

Tensor2D tanh_backward(const Tensor2D& y, const Tensor2D& d_y) {
  Tensor2D dx = d_y;
  const auto yv = y.values();
  auto dv = dx.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= 1.0 - yv[i] * yv[i];
  return dx;
}

Tensor2D hadamard(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("hadamard shape mismatch");
  Tensor2D out = a;
  auto o = out.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

Tensor2D dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must lie in [0, 1)");
  Tensor2D mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  for (double& v : mask.values()) v = drop(rng) ? 0.0 : keep_scale;
  return mask;
}

double mse(const Tensor2D& pred, const Tensor2D& target) {
  if (pred.size() != target.size() || pred.empty()) throw ShapeError("mse shape mismatch");
  double s = 0.0;
  const auto p = pred.values();
  const auto t = target.values();
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return s / static_cast<double>(p.size());
}

Tensor2D mse_grad(const Tensor2D& pred, const Tensor2D& target) {
  Tensor2D g(pred.rows(), pred.cols());
  const auto p = pred.values();
  const auto t = target.values();
  auto gv = g.values();
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) gv[i] = 2.0 * (p[i] - t[i]) / n;
  return g;
}

}  // namespace reccot::nn
