#include "forge/numerics/optim.hpp"

#include <cmath>

#include "forge/error.hpp"
#include "forge/numerics/kernels.hpp"

namespace forge {

AdamW::AdamW(ParameterList params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(static_cast<std::size_t>(params_[i].tensor.numel()), 0.0f);
    v_[i].assign(static_cast<std::size_t>(params_[i].tensor.numel()), 0.0f);
  }
}

void AdamW::step() {
  for (const auto& p : params_) {
    if (p.tensor.requires_grad() && !p.tensor.has_grad()) {
      throw Error("adamw: trainable parameter '" + p.name + "' has no gradient");
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(config_.beta1), static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(config_.beta2), static_cast<double>(step_));
  const float b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    if (!t.requires_grad()) continue;
    auto w = t.mutable_data();
    const auto g = t.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= config_.lr * config_.weight_decay * w[j];
      w[j] -= static_cast<float>(config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    const auto g = p.tensor.grad();
    total += kernels::active().sumsq(g.data(), g.size());
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto p : params) {
      if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
      for (auto& v : p.tensor.mutable_grad()) v *= s;
    }
  }
  return norm;
}

}  // namespace forge
