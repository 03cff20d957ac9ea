#include "forge/training/sequence.hpp"

#include <algorithm>
#include <string>

#include "forge/error.hpp"
#include "forge/model/audio_lm.hpp"

namespace forge::training {

std::int64_t SequencePlan::scored() const {
  return std::count_if(targets.begin(), targets.end(),
                       [](std::int64_t t) { return t != model::kIgnoreIndex; });
}

SequencePlan build_sequence(std::int64_t n_audio, std::optional<std::string_view> prompt,
                            std::string_view response, std::int64_t context, bool score_prompt) {
  SequencePlan plan;
  plan.n_audio = n_audio;
  if (prompt) plan.prompt = model::to_ids(*prompt);
  plan.response = model::to_ids(response);
  const auto n_prompt = static_cast<std::int64_t>(plan.prompt.size());
  const auto n_resp = static_cast<std::int64_t>(plan.response.size());
  const std::int64_t len = 1 + n_audio + n_prompt + n_resp + 1;
  if (len > context) {
    throw DimensionError("sequence of " + std::to_string(len) + " positions (" + std::to_string(n_audio) +
                         " audio, " + std::to_string(n_prompt) + " prompt, " + std::to_string(n_resp) +
                         " response) exceeds context " + std::to_string(context));
  }
  plan.targets.assign(static_cast<std::size_t>(len), model::kIgnoreIndex);
  // position i predicts the token at i + 1
  const std::int64_t prompt_start = 1 + n_audio;
  const std::int64_t resp_start = prompt_start + n_prompt;
  const std::int64_t first = score_prompt ? prompt_start : resp_start;
  for (std::int64_t pos = first; pos < len; ++pos) {
    std::int64_t token;
    if (pos < resp_start) token = plan.prompt[static_cast<std::size_t>(pos - prompt_start)];
    else if (pos < resp_start + n_resp) token = plan.response[static_cast<std::size_t>(pos - resp_start)];
    else token = model::kEos;
    plan.targets[static_cast<std::size_t>(pos - 1)] = token;
  }
  return plan;
}

}  // namespace forge::training
