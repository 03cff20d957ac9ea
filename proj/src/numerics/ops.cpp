#include "forge/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "forge/error.hpp"
#include "forge/numerics/kernels.hpp"

namespace forge {
namespace {

using std::size_t;

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

size_t usize(std::int64_t v) { return static_cast<size_t>(v); }

int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw IndexError("axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  return a;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const size_t m = usize(a.dim(0)), k = usize(a.dim(1)), n = usize(b.dim(1));
  std::vector<float> out(m * n, 0.0f);
  kernels::active().gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return Tensor::make_result({a.dim(0), b.dim(1)}, std::move(out), {a, b}, [m, n, k](Node& o) {
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    const auto& kt = kernels::active();
    if (na.requires_grad) kt.gemm_nt(m, k, n, o.grad.data(), nb.data.data(), na.grad_buffer().data());
    if (nb.requires_grad) kt.gemm_tn(k, n, m, na.data.data(), o.grad.data(), nb.grad_buffer().data());
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  }
  const size_t m = usize(a.dim(0)), k = usize(a.dim(1)), n = usize(b.dim(0));
  std::vector<float> out(m * n, 0.0f);
  kernels::active().gemm_nt(m, n, k, a.data().data(), b.data().data(), out.data());
  return Tensor::make_result({a.dim(0), b.dim(0)}, std::move(out), {a, b}, [m, n, k](Node& o) {
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    const auto& kt = kernels::active();
    // dA = dC * B, dB = dC^T * A
    if (na.requires_grad) kt.gemm_nn(m, k, n, o.grad.data(), nb.data.data(), na.grad_buffer().data());
    if (nb.requires_grad) kt.gemm_tn(n, k, m, o.grad.data(), na.data.data(), nb.grad_buffer().data());
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul_nt(x, w);
  return bias.defined() ? add_bias(y, bias) : y;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const size_t r = usize(a.dim(0)), c = usize(a.dim(1));
  std::vector<float> out(r * c);
  const auto in = a.data();
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return Tensor::make_result({a.dim(1), a.dim(0)}, std::move(out), {a}, [r, c](Node& o) {
    auto g = o.inputs[0]->grad_buffer();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (auto& in : o.inputs) {
      if (!in->requires_grad) continue;
      kernels::active().axpy(1.0f, o.grad.data(), in->grad_buffer().data(), o.grad.size());
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    const auto& kt = kernels::active();
    if (o.inputs[0]->requires_grad) kt.axpy(1.0f, o.grad.data(), o.inputs[0]->grad_buffer().data(), o.grad.size());
    if (o.inputs[1]->requires_grad) kt.axpy(-1.0f, o.grad.data(), o.inputs[1]->grad_buffer().data(), o.grad.size());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    if (na.requires_grad) {
      auto g = na.grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * nb.data[i];
    }
    if (nb.requires_grad) {
      auto g = nb.grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * na.data[i];
    }
  });
}

Tensor scale(const Tensor& a, float s) {
  std::vector<float> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [s](Node& o) {
    kernels::active().axpy(s, o.grad.data(), o.inputs[0]->grad_buffer().data(), o.grad.size());
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.dim(-1) != bias.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  const size_t d = usize(bias.dim(0));
  std::vector<float> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i % d];
  return Tensor::make_result(x.shape(), std::move(out), {x, bias}, [d](Node& o) {
    Node& nx = *o.inputs[0];
    Node& nb = *o.inputs[1];
    if (nx.requires_grad) kernels::active().axpy(1.0f, o.grad.data(), nx.grad_buffer().data(), o.grad.size());
    if (nb.requires_grad) {
      auto g = nb.grad_buffer();
      for (size_t i = 0; i < o.grad.size(); ++i) g[i % d] += o.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return Tensor::make_result({}, {static_cast<float>(acc)}, {a}, [](Node& o) {
    const float g = o.grad[0];
    for (auto& v : o.inputs[0]->grad_buffer()) v += g;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0f / static_cast<float>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<float> out(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a}, [](Node& o) {
    kernels::active().axpy(1.0f, o.grad.data(), o.inputs[0]->grad_buffer().data(), o.grad.size());
  });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  for (const auto& p : parts) require_matrix(p, "concat");
  axis = normalize_axis(axis, 2);
  const int other = 1 - axis;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(other) != parts[0].dim(other)) {
      throw DimensionError("concat: " + shape_str(p.shape()) + " incompatible with " +
                           shape_str(parts[0].shape()) + " along axis " + std::to_string(axis));
    }
    total += p.dim(axis);
  }
  Shape shape = parts[0].shape();
  shape[usize(axis)] = total;
  const size_t rows = usize(shape[0]), cols = usize(shape[1]);
  std::vector<float> out(rows * cols);
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto d = p.data();
    const size_t pr = usize(p.dim(0)), pc = usize(p.dim(1));
    for (size_t i = 0; i < pr; ++i) {
      const size_t dst_row = axis == 0 ? usize(off) + i : i;
      const size_t dst_col = axis == 0 ? 0 : usize(off);
      std::copy_n(d.data() + i * pc, pc, out.data() + dst_row * cols + dst_col);
    }
    off += p.dim(axis);
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make_result(std::move(shape), std::move(out), std::move(inputs),
                             [axis, cols, offsets](Node& o) {
    for (size_t idx = 0; idx < o.inputs.size(); ++idx) {
      Node& in = *o.inputs[idx];
      if (!in.requires_grad) continue;
      auto g = in.grad_buffer();
      const size_t pr = usize(in.shape[0]), pc = usize(in.shape[1]);
      const size_t off = usize(offsets[idx]);
      for (size_t i = 0; i < pr; ++i) {
        const size_t src_row = axis == 0 ? off + i : i;
        const size_t src_col = axis == 0 ? 0 : off;
        const float* src = o.grad.data() + src_row * cols + src_col;
        for (size_t j = 0; j < pc; ++j) g[i * pc + j] += src[j];
      }
    }
  });
}

Tensor slice(const Tensor& a, int axis, std::int64_t begin, std::int64_t end) {
  require_matrix(a, "slice");
  axis = normalize_axis(axis, 2);
  if (begin < 0 || end > a.dim(axis) || begin >= end) {
    throw IndexError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for axis " + std::to_string(axis) + " of " +
                     shape_str(a.shape()));
  }
  Shape shape = a.shape();
  shape[usize(axis)] = end - begin;
  const size_t rows = usize(shape[0]), cols = usize(shape[1]);
  const size_t src_cols = usize(a.dim(1));
  const size_t row0 = axis == 0 ? usize(begin) : 0;
  const size_t col0 = axis == 1 ? usize(begin) : 0;
  std::vector<float> out(rows * cols);
  const auto d = a.data();
  for (size_t i = 0; i < rows; ++i)
    std::copy_n(d.data() + (row0 + i) * src_cols + col0, cols, out.data() + i * cols);
  return Tensor::make_result(std::move(shape), std::move(out), {a},
                             [rows, cols, src_cols, row0, col0](Node& o) {
    auto g = o.inputs[0]->grad_buffer();
    for (size_t i = 0; i < rows; ++i) {
      float* dst = g.data() + (row0 + i) * src_cols + col0;
      for (size_t j = 0; j < cols; ++j) dst[j] += o.grad[i * cols + j];
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids) {
  require_matrix(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: empty index list");
  const std::int64_t v = table.dim(0);
  const size_t d = usize(table.dim(1));
  std::vector<float> out(ids.size() * d);
  const auto src = table.data();
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v) {
      throw IndexError("gather_rows: index " + std::to_string(ids[i]) + " outside [0, " +
                       std::to_string(v) + ")");
    }
    std::copy_n(src.data() + usize(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<std::int64_t> saved(ids.begin(), ids.end());
  return Tensor::make_result({static_cast<std::int64_t>(ids.size()), table.dim(1)}, std::move(out),
                             {table}, [d, saved](Node& o) {
    auto g = o.inputs[0]->grad_buffer();
    for (size_t i = 0; i < saved.size(); ++i) {
      kernels::active().axpy(1.0f, o.grad.data() + i * d, g.data() + usize(saved[i]) * d, d);
    }
  });
}

Tensor softmax(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.rank());
  size_t outer = 1, inner = 1;
  const size_t n = usize(x.dim(axis));
  for (int i = 0; i < axis; ++i) outer *= usize(x.dim(i));
  for (int i = axis + 1; i < x.rank(); ++i) inner *= usize(x.dim(i));
  const auto in = x.data();
  for (float v : in) {
    if (std::isnan(v)) throw Error("softmax: NaN in input");
  }
  std::vector<float> out(in.size());
  for (size_t o = 0; o < outer; ++o) {
    for (size_t j = 0; j < inner; ++j) {
      const size_t base = o * n * inner + j;
      float mx = -std::numeric_limits<float>::infinity();
      for (size_t i = 0; i < n; ++i) mx = std::max(mx, in[base + i * inner]);
      double total = 0.0;
      for (size_t i = 0; i < n; ++i) {
        const float e = std::exp(in[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      const float inv = static_cast<float>(1.0 / total);
      for (size_t i = 0; i < n; ++i) out[base + i * inner] *= inv;
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [outer, inner, n](Node& o) {
    auto g = o.inputs[0]->grad_buffer();
    for (size_t b = 0; b < outer; ++b) {
      for (size_t j = 0; j < inner; ++j) {
        const size_t base = b * n * inner + j;
        float dotv = 0.0f;
        for (size_t i = 0; i < n; ++i) dotv += o.grad[base + i * inner] * o.data[base + i * inner];
        for (size_t i = 0; i < n; ++i) {
          const size_t k = base + i * inner;
          g[k] += o.data[k] * (o.grad[k] - dotv);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const std::int64_t d64 = x.dim(-1);
  if (gamma.shape() != Shape{d64} || beta.shape() != Shape{d64}) {
    throw DimensionError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match " + shape_str(x.shape()));
  }
  const size_t d = usize(d64);
  const size_t rows = usize(x.numel()) / d;
  const auto in = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<float> out(in.size());
  std::vector<float> xhat(in.size());
  std::vector<float> rstd(rows);
  for (size_t r = 0; r < rows; ++r) {
    const float* row = in.data() + r * d;
    double mu = 0.0;
    for (size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const float rs = static_cast<float>(1.0 / std::sqrt(var + eps));
    rstd[r] = rs;
    for (size_t j = 0; j < d; ++j) {
      const float xh = (row[j] - static_cast<float>(mu)) * rs;
      xhat[r * d + j] = xh;
      out[r * d + j] = xh * gm[j] + bt[j];
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x, gamma, beta},
                             [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& o) {
    Node& nx = *o.inputs[0];
    Node& ng = *o.inputs[1];
    Node& nb = *o.inputs[2];
    if (ng.requires_grad || nb.requires_grad) {
      auto gg = ng.requires_grad ? ng.grad_buffer() : std::span<float>();
      auto gb = nb.requires_grad ? nb.grad_buffer() : std::span<float>();
      for (size_t r = 0; r < rows; ++r) {
        for (size_t j = 0; j < d; ++j) {
          const float dy = o.grad[r * d + j];
          if (!gg.empty()) gg[j] += dy * xhat[r * d + j];
          if (!gb.empty()) gb[j] += dy;
        }
      }
    }
    if (nx.requires_grad) {
      auto gx = nx.grad_buffer();
      const auto& gm = ng.data;
      for (size_t r = 0; r < rows; ++r) {
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (size_t j = 0; j < d; ++j) {
          const float dxh = o.grad[r * d + j] * gm[j];
          mean_dxh += dxh;
          mean_dxh_xh += dxh * xhat[r * d + j];
        }
        mean_dxh /= static_cast<double>(d);
        mean_dxh_xh /= static_cast<double>(d);
        for (size_t j = 0; j < d; ++j) {
          const float dxh = o.grad[r * d + j] * gm[j];
          gx[r * d + j] += rstd[r] * (dxh - static_cast<float>(mean_dxh) -
                                      xhat[r * d + j] * static_cast<float>(mean_dxh_xh));
        }
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float kA = 0.044715f;
  const auto in = x.data();
  std::vector<float> out(in.size());
  for (size_t i = 0; i < in.size(); ++i) {
    const float v = in[i];
    out[i] = 0.5f * v * (1.0f + std::tanh(kC * (v + kA * v * v * v)));
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& o) {
    Node& nx = *o.inputs[0];
    auto g = nx.grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) {
      const float v = nx.data[i];
      const float t = std::tanh(kC * (v + kA * v * v * v));
      const float dt = (1.0f - t * t) * kC * (1.0f + 3.0f * kA * v * v);
      g[i] += o.grad[i] * (0.5f * (1.0f + t) + 0.5f * v * dt);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                     std::int64_t ignore_index) {
  require_matrix(logits, "cross_entropy");
  const size_t rows = usize(logits.dim(0));
  const size_t v = usize(logits.dim(1));
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(logits.shape()));
  }
  size_t count = 0;
  for (auto t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || usize(t) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(v) + ")");
    }
    ++count;
  }
  if (count == 0) throw DegenerateBatchError("cross_entropy: every target is ignore_index");

  const auto in = logits.data();
  std::vector<float> probs(rows * v, 0.0f);
  double total = 0.0;
  for (size_t r = 0; r < rows; ++r) {
    if (targets[r] == ignore_index) continue;
    const float* row = in.data() + r * v;
    float mx = -std::numeric_limits<float>::infinity();
    for (size_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (size_t j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    const double logz = std::log(z) + mx;
    total += logz - row[usize(targets[r])];
    for (size_t j = 0; j < v; ++j) {
      probs[r * v + j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - logz));
    }
  }
  const float loss = static_cast<float>(total / static_cast<double>(count));
  std::vector<std::int64_t> saved(targets.begin(), targets.end());
  return Tensor::make_result({}, {loss}, {logits},
                             [rows, v, count, ignore_index, saved, probs = std::move(probs)](Node& o) {
    auto g = o.inputs[0]->grad_buffer();
    const float s = o.grad[0] / static_cast<float>(count);
    for (size_t r = 0; r < rows; ++r) {
      if (saved[r] == ignore_index) continue;
      for (size_t j = 0; j < v; ++j) g[r * v + j] += s * probs[r * v + j];
      g[r * v + usize(saved[r])] -= s;
    }
  });
}

Tensor unfold_frames(const Tensor& x, int kernel, int stride, int pad) {
  require_matrix(x, "unfold_frames");
  if (kernel <= 0 || stride <= 0 || pad < 0) throw DimensionError("unfold_frames: bad geometry");
  const std::int64_t t = x.dim(0);
  const std::int64_t span = t + 2 * pad - kernel;
  if (span < 0) {
    throw DimensionError("unfold_frames: " + std::to_string(t) + " frames shorter than kernel " +
                         std::to_string(kernel));
  }
  const std::int64_t t_out = span / stride + 1;
  const size_t c = usize(x.dim(1));
  const size_t width = usize(kernel) * c;
  std::vector<float> out(usize(t_out) * width, 0.0f);
  const auto in = x.data();
  for (std::int64_t r = 0; r < t_out; ++r) {
    for (int k = 0; k < kernel; ++k) {
      const std::int64_t src = r * stride - pad + k;
      if (src < 0 || src >= t) continue;
      std::copy_n(in.data() + usize(src) * c, c, out.data() + usize(r) * width + usize(k) * c);
    }
  }
  return Tensor::make_result({t_out, static_cast<std::int64_t>(width)}, std::move(out), {x},
                             [t, t_out, c, width, kernel, stride, pad](Node& o) {
    auto g = o.inputs[0]->grad_buffer();
    for (std::int64_t r = 0; r < t_out; ++r) {
      for (int k = 0; k < kernel; ++k) {
        const std::int64_t src = r * stride - pad + k;
        if (src < 0 || src >= t) continue;
        const float* gsrc = o.grad.data() + usize(r) * width + usize(k) * c;
        float* dst = g.data() + usize(src) * c;
        for (size_t j = 0; j < c; ++j) dst[j] += gsrc[j];
      }
    }
  });
}

}  // namespace forge
