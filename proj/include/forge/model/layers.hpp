#pragma once

#include <optional>
#include <string>

#include "forge/numerics/ops.hpp"
#include "forge/numerics/rng.hpp"
#include "forge/numerics/tensor.hpp"

namespace forge::model {

Tensor normal_param(Rng& rng, Shape shape, double stddev);

struct Linear {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  static Linear init(Rng& rng, int in, int out);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Low-rank delta on top of a frozen projection: W + (alpha / r) * B * A.
struct LoraDelta {
  Tensor a;  // [r x in], small random
  Tensor b;  // [out x r], zero at attachment
  float scale = 0.0f;
};

struct LoraLinear {
  Linear base;
  std::optional<LoraDelta> lora;

  Tensor forward(const Tensor& x) const;
  // Folds the delta into base.weight and drops it.
  void merge();
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm init(int dim);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct Attention {
  LoraLinear q, k, v;
  Linear o;
  int heads = 1;

  static Attention init(Rng& rng, int d_query, int d_kv, int d_model, int heads);
  // query [Tq x d_query], kv [Tk x d_kv]; mask, when given, is added to every
  // head's [Tq x Tk] score matrix.
  Tensor forward(const Tensor& query, const Tensor& kv, const Tensor& mask = Tensor()) const;
  // Same with keys/values already projected ([Tk x d_model] each).
  Tensor attend(const Tensor& query, const Tensor& keys, const Tensor& values,
                const Tensor& mask = Tensor()) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct Mlp {
  Linear fc1, fc2;

  static Mlp init(Rng& rng, int dim, int hidden);
  Tensor forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Pre-norm self-attention block.
struct Block {
  LayerNorm ln1, ln2;
  Attention attn;
  Mlp mlp;

  static Block init(Rng& rng, int dim, int heads, int mlp_ratio);
  Tensor forward(const Tensor& x, const Tensor& mask = Tensor()) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

// [T x T] additive mask: 0 on and below the diagonal, -1e9 above.
Tensor causal_mask(std::int64_t t);

// Fixed sin/cos table [rows x dim].
Tensor sinusoidal_table(int rows, int dim);

}  // namespace forge::model
