#pragma once

#include <functional>
#include <span>
#include <vector>

#include "reccot/nn/layers.hpp"

namespace reccot::nn {

using ScalarFn = std::function<double(std::span<const double>)>;

// Central-difference gradient of f at x.
std::vector<double> numerical_gradient(const ScalarFn& f, std::span<const double> x,
                                       double step = 1e-5);

// max_j |g_fd - g| / max(1, |g_fd| + |g|)
double grad_check(const ScalarFn& f, std::span<const double> params,
                  std::span<const double> exact_grads, double step = 1e-5);

std::vector<double> flatten_values(std::span<Parameter* const> params);
std::vector<double> flatten_grads(std::span<Parameter* const> params);
void assign_values(std::span<Parameter* const> params, std::span<const double> flat);
void zero_grads(std::span<Parameter* const> params);

}  // namespace reccot::nn
