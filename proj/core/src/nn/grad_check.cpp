#include "reccot/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "reccot/error.hpp"

namespace reccot::nn {

std::vector<double> numerical_gradient(const ScalarFn& f, std::span<const double> x, double step) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double orig = probe[j];
    probe[j] = orig + step;
    const double up = f(probe);
    probe[j] = orig - step;
    const double down = f(probe);
    probe[j] = orig;
    g[j] = (up - down) / (2.0 * step);
  }
  return g;
}

double grad_check(const ScalarFn& f, std::span<const double> params,
                  std::span<const double> exact_grads, double step) {
  if (params.size() != exact_grads.size()) throw ShapeError("grad_check: length mismatch");
  const auto fd = numerical_gradient(f, params, step);
  double worst = 0.0;
  for (std::size_t j = 0; j < fd.size(); ++j) {
    const double denom = std::max(1.0, std::abs(fd[j]) + std::abs(exact_grads[j]));
    worst = std::max(worst, std::abs(fd[j] - exact_grads[j]) / denom);
  }
  return worst;
}

std::vector<double> flatten_values(std::span<Parameter* const> params) {
  std::vector<double> flat;
  for (const Parameter* p : params) {
    const auto v = p->value.values();
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return flat;
}

std::vector<double> flatten_grads(std::span<Parameter* const> params) {
  std::vector<double> flat;
  for (const Parameter* p : params) {
    const auto g = p->grad.values();
    flat.insert(flat.end(), g.begin(), g.end());
  }
  return flat;
}

void assign_values(std::span<Parameter* const> params, std::span<const double> flat) {
  std::size_t offset = 0;
  for (Parameter* p : params) {
    auto v = p->value.values();
    if (offset + v.size() > flat.size()) throw ShapeError("assign_values: flat vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), v.size(), v.begin());
    offset += v.size();
  }
  if (offset != flat.size()) throw ShapeError("assign_values: flat vector too long");
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    p->grad.fill(0.0);
    p->touched.clear();
  }
}

}  // namespace reccot::nn
