#pragma once

// Central finite-difference oracle. Perturbs f32 inputs, but accumulates the
// probe objective in double so the comparison is limited by the op's own
// rounding rather than by the reduction. The divisor is the step actually
// realized in f32, not 2h.
//
// Relative error is |a - n| / max(|a|, |n|, floor). At f32 with h = 1e-3 the
// difference quotient carries ~1e-4 of rounding noise for O(1) outputs, so
// the default floor is 1: gradients below unit magnitude are held to the
// same absolute bound.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "forge/numerics/ops.hpp"
#include "forge/numerics/rng.hpp"
#include "forge/numerics/tensor.hpp"

namespace forge::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "<input index>[<element>] analytic=.. numeric=.."
  std::size_t checked = 0;
};

inline double rel_err(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad, double stddev = 1.0) {
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<float>(rng.normal() * stddev);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Checks d(sum(w * f(inputs)))/d(inputs) for a fixed random weighting w.
inline GradCheckResult check_op(const std::function<Tensor(std::vector<Tensor>&)>& f,
                                std::vector<Tensor> inputs, Rng& rng, double h = 1e-3,
                                double floor = 1.0) {
  Tensor probe_out;
  {
    NoGradGuard ng;
    probe_out = f(inputs);
  }
  Tensor weights = random_tensor(rng, probe_out.shape(), false);
  const auto w = weights.data();

  for (auto& in : inputs) in.zero_grad();
  Tensor out = f(inputs);
  backward(sum(mul(out, weights)));

  auto objective = [&]() {
    NoGradGuard ng;
    Tensor y = f(inputs);
    double s = 0.0;
    const auto yd = y.data();
    for (std::size_t i = 0; i < yd.size(); ++i) s += static_cast<double>(yd[i]) * w[i];
    return s;
  };

  GradCheckResult res;
  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    Tensor t = inputs[idx];
    if (!t.requires_grad()) continue;
    std::vector<float> analytic(t.grad().begin(), t.grad().end());
    if (analytic.empty()) analytic.assign(static_cast<std::size_t>(t.numel()), 0.0f);
    auto data = t.mutable_data();
    for (std::size_t e = 0; e < data.size(); ++e) {
      const float orig = data[e];
      const float hi = orig + static_cast<float>(h);
      const float lo = orig - static_cast<float>(h);
      data[e] = hi;
      const double up = objective();
      data[e] = lo;
      const double down = objective();
      data[e] = orig;
      const double numeric = (up - down) / (static_cast<double>(hi) - lo);
      const double err = rel_err(analytic[e], numeric, floor);
      ++res.checked;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst = std::to_string(idx) + "[" + std::to_string(e) + "] analytic=" +
                    std::to_string(analytic[e]) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return res;
}

// Checks d(loss)/d(param) for a scalar loss closure over a parameter list.
inline GradCheckResult check_loss(const std::function<Tensor()>& loss_fn, ParameterList params,
                                  double h = 1e-3, double floor = 1.0,
                                  std::size_t max_per_param = 0) {
  for (auto& p : params) p.tensor.zero_grad();
  backward(loss_fn());
  GradCheckResult res;
  for (auto& p : params) {
    Tensor t = p.tensor;
    if (!t.requires_grad()) continue;
    std::vector<float> analytic(t.grad().begin(), t.grad().end());
    if (analytic.empty()) analytic.assign(static_cast<std::size_t>(t.numel()), 0.0f);
    auto data = t.mutable_data();
    const std::size_t n = data.size();
    const std::size_t stride = (max_per_param == 0 || n <= max_per_param) ? 1 : n / max_per_param;
    for (std::size_t e = 0; e < n; e += stride) {
      const float orig = data[e];
      const float hi = orig + static_cast<float>(h);
      const float lo = orig - static_cast<float>(h);
      double up, down;
      {
        NoGradGuard ng;
        data[e] = hi;
        up = loss_fn().item();
        data[e] = lo;
        down = loss_fn().item();
        data[e] = orig;
      }
      const double numeric = (up - down) / (static_cast<double>(hi) - lo);
      const double err = rel_err(analytic[e], numeric, floor);
      ++res.checked;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst = p.name + "[" + std::to_string(e) + "] analytic=" +
                    std::to_string(analytic[e]) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return res;
}

}  // namespace forge::testing
