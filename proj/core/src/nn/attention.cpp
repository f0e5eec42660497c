#include "reccot/nn/attention.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "reccot/error.hpp"

namespace reccot::nn {

AttentionResult attention(const Tensor2D& query, const Tensor2D& keys, const Tensor2D& values,
                          const std::vector<bool>& mask) {
  const std::size_t n = keys.rows();
  const std::size_t d = query.cols();
  if (query.rows() != 1 || keys.cols() != d || values.rows() != n || mask.size() != n) {
    throw ShapeError("attention: expected query 1x" + std::to_string(d) + ", keys nx" +
                     std::to_string(d) + ", values nxdv and a mask of length n");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const auto q = query.row(0);

  Tensor2D weights(1, n);
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask[j]) continue;
    weights(0, j) = dot(q, keys.row(j)) * scale;
    mx = any ? std::max(mx, weights(0, j)) : weights(0, j);
    any = true;
  }
  if (!any) throw Error("attention: every position is masked");

  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask[j]) continue;
    weights(0, j) = std::exp(weights(0, j) - mx);
    sum += weights(0, j);
  }
  Tensor2D output(1, values.cols());
  auto out = output.row(0);
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask[j]) continue;
    weights(0, j) /= sum;
    const double w = weights(0, j);
    const auto v = values.row(j);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += w * v[c];
  }
  return {std::move(output), std::move(weights)};
}

AttentionGrads attention_backward(const Tensor2D& d_output, const Tensor2D& query,
                                  const Tensor2D& keys, const Tensor2D& values,
                                  const Tensor2D& weights) {
  const std::size_t n = keys.rows();
  const std::size_t d = query.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const auto d_out = d_output.row(0);
  const auto w = weights.row(0);

  AttentionGrads g{Tensor2D(1, d), Tensor2D(n, d), Tensor2D(n, values.cols())};

  // dL/dw_j = <d_out, v_j>; through softmax: ds_j = w_j (dw_j - sum_k w_k dw_k)
  std::vector<double> d_w(n, 0.0);
  double weighted = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (w[j] == 0.0) continue;
    d_w[j] = dot(d_out, values.row(j));
    weighted += w[j] * d_w[j];
    auto dv = g.d_values.row(j);
    for (std::size_t c = 0; c < dv.size(); ++c) dv[c] = w[j] * d_out[c];
  }
  auto dq = g.d_query.row(0);
  const auto q = query.row(0);
  for (std::size_t j = 0; j < n; ++j) {
    if (w[j] == 0.0) continue;
    const double ds = w[j] * (d_w[j] - weighted) * scale;
    const auto k = keys.row(j);
    auto dk = g.d_keys.row(j);
    for (std::size_t c = 0; c < d; ++c) {
      dq[c] += ds * k[c];
      dk[c] = ds * q[c];
    }
  }
  return g;
}

}  // namespace reccot::nn
