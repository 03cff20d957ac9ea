#include "forge/model/audio_lm.hpp"

#include <algorithm>
#include <cmath>

#include "forge/error.hpp"

namespace forge::model {
namespace {

constexpr double kEmbedStd = 0.02;

Rng substream(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
  return Rng(Rng::splitmix64(x));
}

Tensor positional(Rng& rng, const ModelConfig& c, int rows, int dim) {
  if (c.positional == PositionalKind::Sinusoidal) return sinusoidal_table(rows, dim);
  return normal_param(rng, {rows, dim}, kEmbedStd);
}

std::vector<Block> blocks(Rng& rng, int n, int dim, int heads, int mlp_ratio) {
  std::vector<Block> out;
  for (int i = 0; i < n; ++i) out.push_back(Block::init(rng, dim, heads, mlp_ratio));
  return out;
}

void collect_blocks(const std::vector<Block>& layers, const std::string& prefix, ParameterList& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layers." + std::to_string(i), out);
}

void collect_pos(const Tensor& t, bool learned, const std::string& name, ParameterList& out) {
  // sinusoidal tables are constants, not parameters
  if (learned) out.push_back({name, t});
}

Tensor add_positions(const Tensor& x, const Tensor& table, const char* what) {
  const std::int64_t t = x.dim(0);
  if (t > table.dim(0)) {
    throw DimensionError(std::string(what) + ": sequence of " + std::to_string(t) +
                         " exceeds positional table of " + std::to_string(table.dim(0)));
  }
  return add(x, slice(table, 0, 0, t));
}

}  // namespace

std::int64_t speech_frames(std::int64_t mel_frames) {
  const std::int64_t half = (mel_frames + 1) / 2;
  return (half + 1) / 2;
}

std::int64_t adapter_tokens(std::int64_t fused_frames, int window, int queries) {
  return (fused_frames + window - 1) / window * queries;
}

Tensor SpeechEncoder::forward(const Tensor& mel) const {
  Tensor x = gelu(conv1.forward(unfold_frames(mel, 3, 2, 1)));
  x = gelu(conv2.forward(unfold_frames(x, 3, 2, 1)));
  x = add_positions(x, pos, "speech encoder");
  for (const auto& b : layers) x = b.forward(x);
  return ln_post.forward(x);
}

void SpeechEncoder::collect(const std::string& prefix, ParameterList& out) const {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
  collect_pos(pos, learned_pos, prefix + ".pos", out);
  collect_blocks(layers, prefix, out);
  ln_post.collect(prefix + ".ln_post", out);
}

Tensor AudioEventEncoder::forward(const Tensor& mel) const {
  Tensor x = add_positions(frame_proj.forward(mel), pos, "event encoder");
  for (const auto& b : layers) x = b.forward(x);
  return ln_post.forward(x);
}

void AudioEventEncoder::collect(const std::string& prefix, ParameterList& out) const {
  frame_proj.collect(prefix + ".frame_proj", out);
  collect_pos(pos, learned_pos, prefix + ".pos", out);
  collect_blocks(layers, prefix, out);
  ln_post.collect(prefix + ".ln_post", out);
}

Tensor WindowQFormer::forward(const Tensor& fused) const {
  const std::int64_t t = fused.dim(0);
  const std::int64_t w = window_frames;
  const std::int64_t n_windows = (t + w - 1) / w;

  Tensor frames = fused;
  if (window_pos.defined()) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(t));
    for (std::int64_t i = 0; i < t; ++i) idx[static_cast<std::size_t>(i)] = i % w;
    frames = add(frames, gather_rows(window_pos, idx));
  }

  // Keys/values for every frame once per layer; windows slice them.
  std::vector<Tensor> keys, values;
  for (const auto& layer : layers) {
    Tensor kv_in = layer.ln_kv.forward(frames);
    keys.push_back(layer.cross_attn.k.forward(kv_in));
    values.push_back(layer.cross_attn.v.forward(kv_in));
  }

  std::vector<Tensor> outputs;
  outputs.reserve(static_cast<std::size_t>(n_windows));
  for (std::int64_t win = 0; win < n_windows; ++win) {
    const std::int64_t lo = win * w, hi = std::min(t, lo + w);
    Tensor q = query_embed;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      Tensor h = layer.ln_self.forward(q);
      q = add(q, layer.self_attn.forward(h, h));
      Tensor k = n_windows == 1 ? keys[l] : slice(keys[l], 0, lo, hi);
      Tensor v = n_windows == 1 ? values[l] : slice(values[l], 0, lo, hi);
      q = add(q, layer.cross_attn.attend(layer.ln_cross.forward(q), k, v));
      q = add(q, layer.mlp.forward(layer.ln_mlp.forward(q)));
    }
    outputs.push_back(out_proj.forward(ln_out.forward(q)));
  }
  return outputs.size() == 1 ? outputs[0] : concat(outputs, 0);
}

void WindowQFormer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".query_embed", query_embed});
  if (window_pos.defined()) out.push_back({prefix + ".window_pos", window_pos});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = prefix + ".layers." + std::to_string(i);
    layers[i].ln_self.collect(p + ".ln_self", out);
    layers[i].self_attn.collect(p + ".self_attn", out);
    layers[i].ln_cross.collect(p + ".ln_cross", out);
    layers[i].ln_kv.collect(p + ".ln_kv", out);
    layers[i].cross_attn.collect(p + ".cross_attn", out);
    layers[i].ln_mlp.collect(p + ".ln_mlp", out);
    layers[i].mlp.collect(p + ".mlp", out);
  }
  ln_out.collect(prefix + ".ln_out", out);
  out_proj.collect(prefix + ".out_proj", out);
}

Tensor DecoderLM::embed_tokens(std::span<const std::int64_t> ids) const {
  return embedding_lookup(tok_embed, ids);
}

Tensor DecoderLM::forward_embeddings(const Tensor& inputs) const {
  const std::int64_t t = inputs.dim(0);
  if (t > context) {
    throw DimensionError("lm: sequence length " + std::to_string(t) + " exceeds context " +
                         std::to_string(context));
  }
  Tensor x = add_positions(inputs, pos, "lm");
  const Tensor mask = causal_mask(t);
  for (const auto& b : layers) x = b.forward(x, mask);
  return matmul_nt(ln_f.forward(x), tok_embed);
}

void DecoderLM::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".tok_embed", tok_embed});
  collect_pos(pos, learned_pos, prefix + ".pos", out);
  collect_blocks(layers, prefix, out);
  ln_f.collect(prefix + ".ln_f", out);
}

namespace {

// Length of the well-formed sequence starting at b[i], 0 if ill-formed.
std::size_t utf8_seq_len(std::span<const std::uint8_t> b, std::size_t i) {
  const std::uint8_t c = b[i];
  std::size_t len;
  std::uint32_t cp;
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0) {
    len = 2;
    cp = c & 0x1F;
  } else if ((c & 0xF0) == 0xE0) {
    len = 3;
    cp = c & 0x0F;
  } else if ((c & 0xF8) == 0xF0) {
    len = 4;
    cp = c & 0x07;
  } else {
    return 0;
  }
  if (i + len > b.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    if ((b[i + k] & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b[i + k] & 0x3F);
  }
  const std::uint32_t min_cp = len == 2 ? 0x80 : len == 3 ? 0x800 : 0x10000;
  if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
  return len;
}

}  // namespace

bool is_valid_utf8(std::span<const std::uint8_t> b) {
  for (std::size_t i = 0; i < b.size();) {
    const auto n = utf8_seq_len(b, i);
    if (n == 0) return false;
    i += n;
  }
  return true;
}

std::string GenerateResult::lossy_text() const { return lossy_utf8(bytes); }

std::string lossy_utf8(std::span<const std::uint8_t> b) {
  std::string out;
  out.reserve(b.size());
  for (std::size_t i = 0; i < b.size();) {
    const auto n = utf8_seq_len(b, i);
    if (n == 0) {
      out += "\xEF\xBF\xBD";
      ++i;
    } else {
      out.append(reinterpret_cast<const char*>(b.data() + i), n);
      i += n;
    }
  }
  return out;
}

std::vector<std::int64_t> to_ids(std::string_view text) {
  std::vector<std::int64_t> ids;
  ids.reserve(text.size());
  for (char ch : text) ids.push_back(static_cast<std::uint8_t>(ch));
  return ids;
}

AudioLM::AudioLM(ModelConfig config) : config_(config), lora_rng_(substream(config.seed, 5)) {
  config_.validate();
  const auto& c = config_;
  {
    Rng rng = substream(c.seed, 1);
    speech_.conv1 = Linear::init(rng, 3 * c.n_mels, c.d_s);
    speech_.conv2 = Linear::init(rng, 3 * c.d_s, c.d_s);
    speech_.pos = positional(rng, c, (c.max_mel_frames + 3) / 4, c.d_s);
    speech_.learned_pos = c.positional == PositionalKind::Learned;
    speech_.layers = blocks(rng, c.speech_layers, c.d_s, c.speech_heads, c.mlp_ratio);
    speech_.ln_post = LayerNorm::init(c.d_s);
  }
  {
    Rng rng = substream(c.seed, 2);
    event_.frame_proj = Linear::init(rng, c.n_mels, c.d_b);
    event_.pos = positional(rng, c, c.max_mel_frames, c.d_b);
    event_.learned_pos = c.positional == PositionalKind::Learned;
    event_.layers = blocks(rng, c.event_layers, c.d_b, c.event_heads, c.mlp_ratio);
    event_.ln_post = LayerNorm::init(c.d_b);
  }
  {
    Rng rng = substream(c.seed, 3);
    adapter_.window_frames = c.window_frames;
    adapter_.query_embed = normal_param(rng, {c.num_queries, c.d_q}, kEmbedStd);
    if (c.adapter_window_pos) adapter_.window_pos = normal_param(rng, {c.window_frames, c.d_fused()}, kEmbedStd);
    for (int i = 0; i < c.adapter_layers; ++i) {
      QFormerLayer layer;
      layer.ln_self = LayerNorm::init(c.d_q);
      layer.self_attn = Attention::init(rng, c.d_q, c.d_q, c.d_q, c.adapter_heads);
      layer.ln_cross = LayerNorm::init(c.d_q);
      layer.ln_kv = LayerNorm::init(c.d_fused());
      layer.cross_attn = Attention::init(rng, c.d_q, c.d_fused(), c.d_q, c.adapter_heads);
      layer.ln_mlp = LayerNorm::init(c.d_q);
      layer.mlp = Mlp::init(rng, c.d_q, c.d_q * c.mlp_ratio);
      adapter_.layers.push_back(std::move(layer));
    }
    adapter_.ln_out = LayerNorm::init(c.d_q);
    adapter_.out_proj = Linear::init(rng, c.d_q, c.d_llm);
  }
  {
    Rng rng = substream(c.seed, 4);
    lm_.context = c.context;
    lm_.tok_embed = normal_param(rng, {kVocab, c.d_llm}, kEmbedStd);
    lm_.pos = positional(rng, c, c.context, c.d_llm);
    lm_.learned_pos = c.positional == PositionalKind::Learned;
    lm_.layers = blocks(rng, c.lm_layers, c.d_llm, c.lm_heads, c.mlp_ratio);
    lm_.ln_f = LayerNorm::init(c.d_llm);
  }
}

Tensor AudioLM::encode(const Tensor& mel) const {
  if (mel.rank() != 2 || mel.dim(1) != config_.n_mels) {
    throw DimensionError("encode: expected [T x " + std::to_string(config_.n_mels) + "] mel, got " +
                         shape_str(mel.shape()));
  }
  const std::int64_t t = mel.dim(0);
  if (t < 4) throw DimensionError("encode: " + std::to_string(t) + " mel frames, need at least 4");
  Tensor speech = speech_.forward(mel);
  Tensor event = event_.forward(mel);
  const std::int64_t te = speech.dim(0);
  std::vector<std::int64_t> nearest(static_cast<std::size_t>(te));
  for (std::int64_t i = 0; i < te; ++i) {
    const auto j = static_cast<std::int64_t>((2 * i + 1) * t / (2 * te));
    nearest[static_cast<std::size_t>(i)] = std::min(j, t - 1);
  }
  Tensor aligned = gather_rows(event, nearest);
  const Tensor parts[] = {speech, aligned};
  return concat(parts, 1);
}

std::vector<Tensor> AudioLM::encode_batch(std::span<const audio::MelSpectrogram> mels) const {
  std::vector<Tensor> out;
  out.reserve(mels.size());
  for (const auto& m : mels) out.push_back(encode(m));
  return out;
}

Tensor AudioLM::adapt(const Tensor& fused) const {
  if (fused.rank() != 2 || fused.dim(1) != config_.d_fused()) {
    throw DimensionError("adapt: expected [T_e x " + std::to_string(config_.d_fused()) +
                         "] features, got " + shape_str(fused.shape()));
  }
  return adapter_.forward(fused);
}

Tensor AudioLM::lm_forward(const Tensor& audio_tokens, std::span<const std::int64_t> prompt,
                           std::span<const std::int64_t> response, bool append_eos) const {
  const std::int64_t n_audio = audio_tokens.defined() ? audio_tokens.dim(0) : 0;
  const auto n_text = static_cast<std::int64_t>(prompt.size() + response.size()) + (append_eos ? 1 : 0);
  const std::int64_t total = 1 + n_audio + n_text;
  if (total > config_.context) {
    throw DimensionError("lm_forward: 1 BOS + " + std::to_string(n_audio) + " audio + " +
                         std::to_string(prompt.size()) + " prompt + " + std::to_string(response.size()) +
                         " response" + (append_eos ? " + 1 EOS" : "") + " = " + std::to_string(total) +
                         " positions exceeds context " + std::to_string(config_.context));
  }
  std::vector<Tensor> rows;
  const std::int64_t bos[] = {kBos};
  rows.push_back(lm_.embed_tokens(bos));
  if (n_audio > 0) rows.push_back(audio_tokens);
  if (n_text > 0) {
    std::vector<std::int64_t> ids(prompt.begin(), prompt.end());
    ids.insert(ids.end(), response.begin(), response.end());
    if (append_eos) ids.push_back(kEos);
    rows.push_back(lm_.embed_tokens(ids));
  }
  Tensor inputs = rows.size() == 1 ? rows[0] : concat(rows, 0);
  return lm_.forward_embeddings(inputs);
}

GenerateResult AudioLM::generate(const Tensor& audio_tokens, std::span<const std::int64_t> prompt,
                                 const GenerateOptions& options) const {
  NoGradGuard no_grad;
  GenerateResult result;
  Rng rng(options.seed);
  std::vector<std::int64_t> out;
  const std::int64_t n_audio = audio_tokens.defined() ? audio_tokens.dim(0) : 0;
  const auto budget = config_.context - 1 - n_audio - static_cast<std::int64_t>(prompt.size());
  const std::int64_t max_new = std::min<std::int64_t>(options.max_new, std::max<std::int64_t>(budget, 0));
  for (std::int64_t step = 0; step < max_new; ++step) {
    Tensor logits = lm_forward(audio_tokens, prompt, out);
    const std::int64_t last = logits.dim(0) - 1;
    const auto row = logits.data().subspan(static_cast<std::size_t>(last * kVocab), kVocab);
    // only bytes and EOS are decodable
    std::int64_t next = 0;
    if (options.temperature <= 0.0f) {
      for (std::int64_t v = 1; v <= kEos; ++v) {
        if (v == kBos) continue;
        if (row[static_cast<std::size_t>(v)] > row[static_cast<std::size_t>(next)]) next = v;
      }
    } else {
      std::vector<double> p(static_cast<std::size_t>(kEos + 1), 0.0);
      double mx = -1e300;
      for (std::int64_t v = 0; v <= kEos; ++v) {
        if (v != kBos) mx = std::max(mx, static_cast<double>(row[static_cast<std::size_t>(v)]));
      }
      double z = 0.0;
      for (std::int64_t v = 0; v <= kEos; ++v) {
        if (v == kBos) continue;
        p[static_cast<std::size_t>(v)] = std::exp((row[static_cast<std::size_t>(v)] - mx) / options.temperature);
        z += p[static_cast<std::size_t>(v)];
      }
      double u = rng.uniform() * z;
      next = kEos;
      for (std::int64_t v = 0; v <= kEos; ++v) {
        u -= p[static_cast<std::size_t>(v)];
        if (p[static_cast<std::size_t>(v)] > 0.0 && u <= 0.0) {
          next = v;
          break;
        }
      }
    }
    if (next == kEos) {
      result.hit_eos = true;
      break;
    }
    out.push_back(next);
  }
  result.bytes.reserve(out.size());
  for (auto id : out) result.bytes.push_back(static_cast<std::uint8_t>(id));
  result.valid_utf8 = is_valid_utf8(result.bytes);
  return result;
}

void AudioLM::attach_lora(int r, float alpha, const std::set<LoraTarget>& targets) {
  if (lora_attached_) throw Error("attach_lora: LoRA is already attached");
  if (r <= 0) throw ConfigError("attach_lora: rank must be positive");
  if (targets.empty()) throw ConfigError("attach_lora: no target projections");
  const float s = alpha / static_cast<float>(r);
  for (auto& block : lm_.layers) {
    for (auto target : targets) {
      LoraLinear& proj = target == LoraTarget::Query ? block.attn.q : block.attn.v;
      const auto out = proj.base.weight.dim(0), in = proj.base.weight.dim(1);
      proj.lora = LoraDelta{normal_param(lora_rng_, {r, in}, 0.01), Tensor::zeros({out, r}, true), s};
    }
  }
  lora_attached_ = true;
  lora_scale_ = s;
}

void AudioLM::merge_lora() {
  for (auto& block : lm_.layers) {
    block.attn.q.merge();
    block.attn.v.merge();
  }
  lora_attached_ = false;
}

ParameterList AudioLM::parameters() const {
  ParameterList out;
  speech_.collect("speech_encoder", out);
  event_.collect("event_encoder", out);
  adapter_.collect("adapter", out);
  lm_.collect("lm", out);
  for (std::size_t i = 0; i < lm_.layers.size(); ++i) {
    const auto& attn = lm_.layers[i].attn;
    const std::string p = "lora.lm.layers." + std::to_string(i) + ".attn.";
    if (attn.q.lora) {
      out.push_back({p + "q.A", attn.q.lora->a});
      out.push_back({p + "q.B", attn.q.lora->b});
    }
    if (attn.v.lora) {
      out.push_back({p + "v.A", attn.v.lora->a});
      out.push_back({p + "v.B", attn.v.lora->b});
    }
  }
  return out;
}

}  // namespace forge::model
