#include "reccot/nn/adam.hpp"

#include <algorithm>
#include <cmath>

#include "reccot/error.hpp"

namespace reccot::nn {

namespace {

inline void adam_update(double& p, double& m, double& v, double g, const AdamConfig& c,
                        double bc1, double bc2, double sign) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g * g;
  const double m_hat = m / bc1;
  const double v_hat = v / bc2;
  p += sign * c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
}

}  // namespace

void Adam::step(std::span<Parameter* const> params) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (m_.size() != params.size()) throw ShapeError("Adam: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.value.rows() != m_[i].rows() || p.value.cols() != m_[i].cols() ||
        p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw ShapeError("Adam: shape mismatch for parameter '" + p.name + "'");
    }
    if (p.sparse_rows) {
      for (std::size_t r : p.touched) {
        for (double g : p.grad.row(r)) {
          if (!std::isfinite(g)) throw NumericError("Adam: non-finite gradient in '" + p.name + "'");
        }
      }
    } else if (!p.grad.all_finite()) {
      throw NumericError("Adam: non-finite gradient in '" + p.name + "'");
    }
  }

  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    auto update_row = [&](std::size_t r) {
      auto pv = p.value.row(r);
      auto gv = p.grad.row(r);
      auto mv = m_[i].row(r);
      auto vv = v_[i].row(r);
      for (std::size_t c = 0; c < pv.size(); ++c) {
        adam_update(pv[c], mv[c], vv[c], gv[c], cfg_, bc1, bc2, -1.0);
      }
    };
    if (p.sparse_rows) {
      // Touched lists may repeat rows; update each once.
      std::vector<std::size_t> rows = p.touched;
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
      for (std::size_t r : rows) update_row(r);
    } else {
      for (std::size_t r = 0; r < p.value.rows(); ++r) update_row(r);
    }
  }
}

void FlatAdam::step(std::span<double> params, std::span<const double> grads, double sign) {
  if (params.size() != grads.size()) throw ShapeError("FlatAdam: params/grads length mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("FlatAdam: non-finite gradient");
  }
  if (m.empty()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  if (m.size() != params.size()) throw ShapeError("FlatAdam: parameter count changed");
  ++t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(params[i], m[i], v[i], grads[i], cfg, bc1, bc2, sign);
  }
}

}  // namespace reccot::nn
