#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "forge/numerics/tensor.hpp"

namespace forge {

// Differentiable ops. Matrices are rank-2 row-major; there is no general
// broadcasting beyond add_bias and scalar scaling.

Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] * b[n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// x[T x in] * w[out x in]^T (+ bias[out])
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor());
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
// x[..., d] + bias[d]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& a, int axis, std::int64_t begin, std::int64_t end);
// out[i] = table[ids[i]]; the embedding lookup
Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids);
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids) {
  return gather_rows(table, ids);
}

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);
Tensor gelu(const Tensor& x);

// Mean of -log softmax(logits)[t, targets[t]] over rows whose target is not
// ignore_index.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                     std::int64_t ignore_index);

// Frames a [T x C] sequence for a 1-D convolution: row t of the result is the
// concatenation of input rows t*stride - pad .. t*stride - pad + kernel - 1,
// with zeros outside the sequence. Output length is
// floor((T + 2*pad - kernel) / stride) + 1.
Tensor unfold_frames(const Tensor& x, int kernel, int stride, int pad);

}  // namespace forge
