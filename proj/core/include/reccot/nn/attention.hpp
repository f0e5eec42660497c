#pragma once

#include <vector>

#include "reccot/nn/tensor.hpp"

namespace reccot::nn {

// Single-query scaled dot-product attention.
//   query 1 x d, keys n x d, values n x dv, mask n (true = attend).
// Masked positions are excluded from both the max and the normalizer, so
// padding rows never influence the result.
struct AttentionResult {
  Tensor2D output;   // 1 x dv
  Tensor2D weights;  // 1 x n, zero at masked positions
};

AttentionResult attention(const Tensor2D& query, const Tensor2D& keys, const Tensor2D& values,
                          const std::vector<bool>& mask);

struct AttentionGrads {
  Tensor2D d_query;
  Tensor2D d_keys;
  Tensor2D d_values;
};

AttentionGrads attention_backward(const Tensor2D& d_output, const Tensor2D& query,
                                  const Tensor2D& keys, const Tensor2D& values,
                                  const Tensor2D& weights);

}  // namespace reccot::nn
