#include "forge/model/layers.hpp"

#include <cmath>

#include "forge/error.hpp"

namespace forge::model {

Tensor normal_param(Rng& rng, Shape shape, double stddev) {
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<float>(rng.normal() * stddev);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Linear Linear::init(Rng& rng, int in, int out) {
  Linear l;
  l.weight = normal_param(rng, {out, in}, 1.0 / std::sqrt(static_cast<double>(in)));
  l.bias = Tensor::zeros({out}, true);
  return l;
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w", weight});
  out.push_back({prefix + ".b", bias});
}

Tensor LoraLinear::forward(const Tensor& x) const {
  Tensor y = base.forward(x);
  if (!lora) return y;
  Tensor delta = matmul_nt(matmul_nt(x, lora->a), lora->b);
  return add(y, scale(delta, lora->scale));
}

void LoraLinear::merge() {
  if (!lora) return;
  const auto a = lora->a.data();
  const auto b = lora->b.data();
  const auto out = base.weight.dim(0), in = base.weight.dim(1), r = lora->a.dim(0);
  auto w = base.weight.mutable_data();
  for (std::int64_t i = 0; i < out; ++i) {
    for (std::int64_t j = 0; j < in; ++j) {
      float acc = 0.0f;
      for (std::int64_t k = 0; k < r; ++k) acc += b[static_cast<std::size_t>(i * r + k)] * a[static_cast<std::size_t>(k * in + j)];
      w[static_cast<std::size_t>(i * in + j)] += lora->scale * acc;
    }
  }
  lora.reset();
}

LayerNorm LayerNorm::init(int dim) {
  return LayerNorm{Tensor::full({dim}, 1.0f, true), Tensor::zeros({dim}, true)};
}

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".g", gamma});
  out.push_back({prefix + ".b", beta});
}

Attention Attention::init(Rng& rng, int d_query, int d_kv, int d_model, int heads) {
  if (d_model % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  Attention a;
  a.q.base = Linear::init(rng, d_query, d_model);
  a.k.base = Linear::init(rng, d_kv, d_model);
  a.v.base = Linear::init(rng, d_kv, d_model);
  a.o = Linear::init(rng, d_model, d_query);
  a.heads = heads;
  return a;
}

Tensor Attention::forward(const Tensor& query, const Tensor& kv, const Tensor& mask) const {
  return attend(query, k.forward(kv), v.forward(kv), mask);
}

Tensor Attention::attend(const Tensor& query, const Tensor& keys, const Tensor& values,
                         const Tensor& mask) const {
  Tensor qp = q.forward(query);
  const std::int64_t d = qp.dim(1);
  const std::int64_t dh = d / heads;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::int64_t lo = h * dh, hi = lo + dh;
    Tensor qh = heads == 1 ? qp : slice(qp, 1, lo, hi);
    Tensor kh = heads == 1 ? keys : slice(keys, 1, lo, hi);
    Tensor vh = heads == 1 ? values : slice(values, 1, lo, hi);
    Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt);
    if (mask.defined()) scores = add(scores, mask);
    outs.push_back(matmul(softmax(scores, 1), vh));
  }
  Tensor merged = heads == 1 ? outs[0] : concat(outs, 1);
  return o.forward(merged);
}

void Attention::collect(const std::string& prefix, ParameterList& out) const {
  q.base.collect(prefix + ".q", out);
  k.base.collect(prefix + ".k", out);
  v.base.collect(prefix + ".v", out);
  o.collect(prefix + ".o", out);
}

Mlp Mlp::init(Rng& rng, int dim, int hidden) {
  return Mlp{Linear::init(rng, dim, hidden), Linear::init(rng, hidden, dim)};
}

void Mlp::collect(const std::string& prefix, ParameterList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Block Block::init(Rng& rng, int dim, int heads, int mlp_ratio) {
  Block b;
  b.ln1 = LayerNorm::init(dim);
  b.attn = Attention::init(rng, dim, dim, dim, heads);
  b.ln2 = LayerNorm::init(dim);
  b.mlp = Mlp::init(rng, dim, dim * mlp_ratio);
  return b;
}

Tensor Block::forward(const Tensor& x, const Tensor& mask) const {
  Tensor h = ln1.forward(x);
  Tensor y = add(x, attn.forward(h, h, mask));
  return add(y, mlp.forward(ln2.forward(y)));
}

void Block::collect(const std::string& prefix, ParameterList& out) const {
  ln1.collect(prefix + ".ln1", out);
  attn.collect(prefix + ".attn", out);
  ln2.collect(prefix + ".ln2", out);
  mlp.collect(prefix + ".mlp", out);
}

Tensor causal_mask(std::int64_t t) {
  std::vector<float> m(static_cast<std::size_t>(t * t), 0.0f);
  for (std::int64_t i = 0; i < t; ++i)
    for (std::int64_t j = i + 1; j < t; ++j) m[static_cast<std::size_t>(i * t + j)] = -1e9f;
  return Tensor::from({t, t}, std::move(m));
}

Tensor sinusoidal_table(int rows, int dim) {
  std::vector<float> v(static_cast<std::size_t>(rows) * dim);
  for (int p = 0; p < rows; ++p) {
    for (int i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      const double angle = p * freq;
      v[static_cast<std::size_t>(p) * dim + i] =
          static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor::from({rows, dim}, std::move(v));
}

}  // namespace forge::model
