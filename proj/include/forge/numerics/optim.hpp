#pragma once

#include <cstdint>
#include <vector>

#include "forge/numerics/tensor.hpp"

namespace forge {

struct AdamWConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

// Decoupled-weight-decay Adam over a fixed parameter list. Only parameters
// with requires_grad set are touched.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config);

  void step();
  void zero_grad();

  std::uint64_t steps() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const ParameterList& params() const { return params_; }

  // First/second moment buffers, parallel to params().
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t s) { step_ = s; }

 private:
  ParameterList params_;
  AdamWConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::uint64_t step_ = 0;
};

// Global L2 norm over the gradients of trainable params; rescales them in
// place when it exceeds max_norm. Returns the norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

}  // namespace forge
