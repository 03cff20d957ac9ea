#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forge/model/audio_lm.hpp"
#include "forge/numerics/optim.hpp"
#include "forge/training/trainer.hpp"

namespace forge::training {

// Little-endian container:
//   "AFRG" u32 version u32 count
//   count x { u16 name_len, name, u8 dtype (0 f32, 1 u64), u8 rank, u64 dims[rank], data }
//   u64 step, u8 phase, 32-byte RNG state
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::uint8_t dtype = 0;
  Shape dims;
  std::vector<float> f32;
  std::vector<std::uint64_t> u64;
};

struct TensorFile {
  std::vector<TensorRecord> tensors;
  std::uint64_t step = 0;
  std::uint8_t phase = 0;
  std::array<std::uint64_t, 4> rng{};

  const TensorRecord* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file);
// Throws FormatError naming the offending byte offset or tensor.
TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes);
// Atomic: writes <path>.tmp then renames over path.
void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

struct CheckpointState {
  Phase phase = Phase::Pretrain;
  std::uint64_t step = 0;
  std::array<std::uint64_t, 4> rng{};
};

// Model parameters in parameters() order, then optim.t / optim.m.* /
// optim.v.* when an optimizer is given.
TensorFile make_checkpoint(const model::AudioLM& m, const AdamW* optimizer, const CheckpointState& state);
void save_checkpoint(const std::filesystem::path& path, const model::AudioLM& m, const AdamW* optimizer,
                     const CheckpointState& state);

struct LoadReport {
  CheckpointState state;
  std::vector<std::string> warnings;
  bool optimizer_restored = false;
};

// Copies tensors into the model. Missing lora.* tensors keep their fresh
// initialization with a warning; any other missing, unexpected or misshaped
// tensor throws FormatError. Optimizer moments are restored only when an
// optimizer is given and the checkpoint carries state for its exact set.
LoadReport apply_checkpoint(const TensorFile& file, model::AudioLM& m, AdamW* optimizer = nullptr);
LoadReport load_checkpoint(const std::filesystem::path& path, model::AudioLM& m, AdamW* optimizer = nullptr);

}  // namespace forge::training
