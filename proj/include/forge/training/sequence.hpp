#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace forge::training {

// Layout of one training sequence:
//   [BOS][a_1..a_N][prompt bytes][response bytes][EOS]
// targets[i] is the id that position i must predict, or the ignore index.
struct SequencePlan {
  std::int64_t n_audio = 0;
  std::vector<std::int64_t> prompt;
  std::vector<std::int64_t> response;
  std::vector<std::int64_t> targets;

  std::int64_t length() const { return static_cast<std::int64_t>(targets.size()); }
  std::int64_t scored() const;
};

// Only response bytes and the closing EOS are scored unless score_prompt is
// set (text-only LM training scores the prompt too). Throws DimensionError
// when the layout exceeds the context.
SequencePlan build_sequence(std::int64_t n_audio, std::optional<std::string_view> prompt,
                            std::string_view response, std::int64_t context,
                            bool score_prompt = false);

}  // namespace forge::training
