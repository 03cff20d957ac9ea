#include "forge/training/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "forge/error.hpp"
#include "forge/training/checkpoint.hpp"
#include "forge/training/sequence.hpp"
#include "json.hpp"

namespace forge::training {

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::Pretrain: return "pretrain";
    case Phase::Sft: return "sft";
    case Phase::Base: return "base";
  }
  return "unknown";
}

Phase phase_from_string(const std::string& s) {
  if (s == "pretrain") return Phase::Pretrain;
  if (s == "sft") return Phase::Sft;
  if (s == "base") return Phase::Base;
  throw ConfigError("unknown phase '" + s + "' (expected base, pretrain or sft)");
}

std::set<std::string> trainable_params(const model::AudioLM& m, Phase phase) {
  if (phase == Phase::Sft && !m.lora_attached()) throw ConfigError("sft phase requires LoRA to be attached");
  if (phase != Phase::Sft && m.lora_attached()) {
    throw ConfigError(to_string(phase) + " phase must run without LoRA attached");
  }
  std::set<std::string> names;
  for (const auto& p : m.parameters()) {
    const bool take = phase == Phase::Base       ? p.name.starts_with("lm.")
                      : phase == Phase::Pretrain ? p.name.starts_with("adapter.")
                                                 : p.name.starts_with("adapter.") || p.name.starts_with("lora.");
    if (take) names.insert(p.name);
  }
  return names;
}

void apply_phase(model::AudioLM& m, Phase phase) {
  const auto names = trainable_params(m, phase);
  for (auto& p : m.parameters()) {
    p.tensor.set_requires_grad(names.count(p.name) > 0);
    p.tensor.zero_grad();
  }
}

Tensor batch_loss(const model::AudioLM& m, std::span<const TrainItem* const> batch, Phase phase) {
  if (batch.empty()) throw DegenerateBatchError("empty batch");
  std::vector<Tensor> logits;
  std::vector<std::int64_t> targets;
  for (const TrainItem* item : batch) {
    Tensor audio;
    if (item->features.defined()) audio = m.adapt(item->features);
    const std::int64_t n_audio = audio.defined() ? audio.dim(0) : 0;
    std::optional<std::string_view> prompt;
    if (item->prompt) prompt = *item->prompt;
    SequencePlan plan;
    try {
      plan = build_sequence(n_audio, prompt, item->response, m.config().context, phase == Phase::Base);
    } catch (const DimensionError& e) {
      throw DimensionError("example " + item->id + ": " + e.what());
    }
    logits.push_back(m.lm_forward(audio, plan.prompt, plan.response, true));
    targets.insert(targets.end(), plan.targets.begin(), plan.targets.end());
  }
  Tensor all = logits.size() == 1 ? logits[0] : concat(logits, 0);
  return cross_entropy(all, targets, model::kIgnoreIndex);
}

namespace {

ParameterList trainable_list(model::AudioLM& m, Phase phase) {
  apply_phase(m, phase);
  ParameterList out;
  for (auto& p : m.parameters())
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

}  // namespace

Trainer::Trainer(model::AudioLM& m, TrainConfig config)
    : model_(m),
      config_(config),
      optimizer_(trainable_list(m, config.phase), AdamWConfig{config.lr, 0.9f, 0.999f, 1e-8f, config.weight_decay}),
      rng_(config.seed) {
  if (config.steps <= 0) throw ConfigError("train.steps must be positive");
  if (config.batch_size <= 0) throw ConfigError("train.batch_size must be positive");
}

std::vector<const TrainItem*> Trainer::next_batch(std::span<const TrainItem> items) {
  if (items.empty()) throw DegenerateBatchError("no training items");
  if (order_.size() != items.size()) {
    order_.resize(items.size());
    cursor_ = items.size();
  }
  std::vector<const TrainItem*> batch;
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(config_.batch_size), items.size());
  while (batch.size() < want) {
    if (cursor_ >= order_.size()) {
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    batch.push_back(&items[order_[cursor_++]]);
  }
  return batch;
}

StepReport Trainer::train_step(std::span<const TrainItem* const> batch) {
  optimizer_.zero_grad();
  Tensor loss = batch_loss(model_, batch, config_.phase);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    std::string ids;
    for (const auto* item : batch) ids += (ids.empty() ? "" : ",") + item->id;
    throw Error("non-finite loss " + std::to_string(value) + " at " + to_string(config_.phase) + " step " +
                std::to_string(step_ + 1) + " (batch: " + ids + ")");
  }
  backward(loss);
  // parameters outside this batch's graph take a zero gradient
  for (auto p : optimizer_.params()) p.tensor.mutable_grad();
  StepReport report;
  report.grad_norm = clip_grad_norm(optimizer_.params(), config_.grad_clip_norm);
  optimizer_.step();
  ++step_;
  report.step = step_;
  report.loss = value;
  for (const auto* item : batch) {
    report.tokens += static_cast<std::int64_t>(item->response.size()) + 1;
    if (config_.phase == Phase::Base && item->prompt) report.tokens += static_cast<std::int64_t>(item->prompt->size());
  }
  return report;
}

RunResult run_phase(model::AudioLM& m, std::span<const TrainItem> items, const TrainConfig& config,
                    const RunOptions& options) {
  Trainer trainer(m, config);
  RunResult result;
  std::ofstream metrics;
  const std::string tag = to_string(config.phase);
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    const auto path = options.out_dir / (tag + "_metrics.jsonl");
    metrics.open(path, std::ios::binary | std::ios::trunc);
    if (!metrics) throw Error("cannot open " + path.string());
  }
  auto checkpoint = [&](const std::filesystem::path& path) {
    save_checkpoint(path, m, &trainer.optimizer(),
                    CheckpointState{config.phase, static_cast<std::uint64_t>(trainer.step()), trainer.rng().state()});
  };
  for (int s = 0; s < config.steps; ++s) {
    auto batch = trainer.next_batch(items);
    StepReport r = trainer.train_step(batch);
    result.reports.push_back(r);
    if (metrics.is_open()) {
      nlohmann::json line{{"phase", tag}, {"step", r.step}, {"loss", r.loss}, {"grad_norm", r.grad_norm},
                          {"tokens", r.tokens}};
      metrics << line.dump() << '\n';
    }
    if (options.on_step) options.on_step(r);
    if (!options.out_dir.empty() && config.checkpoint_every > 0 && r.step % config.checkpoint_every == 0 &&
        s + 1 < config.steps) {
      checkpoint(options.out_dir / (tag + "-step" + std::to_string(r.step) + ".ckpt"));
    }
  }
  if (!options.out_dir.empty()) {
    result.checkpoint = options.out_dir / (tag + ".ckpt");
    checkpoint(result.checkpoint);
  }
  return result;
}

std::vector<TrainItem> text_items(std::span<const TrainItem> items) {
  std::vector<TrainItem> out;
  for (const auto& item : items) {
    out.push_back(TrainItem{item.id + ":response", Tensor(), std::nullopt, item.response});
    if (item.prompt && !item.prompt->empty()) {
      out.push_back(TrainItem{item.id + ":dialog", Tensor(), item.prompt, item.response});
    }
  }
  return out;
}

}  // namespace forge::training
