#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "forge/cli/config.hpp"
#include "json.hpp"

namespace forge::cli {

// One JSON object per line on stderr, mirrored to <out>/log.jsonl once a
// file is attached.
class Log {
 public:
  explicit Log(bool quiet = false) : quiet_(quiet) {}
  void attach(const std::filesystem::path& file);
  void event(const std::string& name, nlohmann::ordered_json fields = nlohmann::ordered_json::object());

 private:
  bool quiet_;
  std::unique_ptr<std::ofstream> file_;
};

// Writes <out>/config.json with the fully resolved configuration.
void echo_config(const Config& config, const std::filesystem::path& out);

// synth corpus -> speechif data -> mix -> base/pretrain/sft -> eval over all
// seven tasks. Returns the summary also written to <out>/summary.json.
nlohmann::ordered_json run_pipeline(const Config& config, const std::filesystem::path& out, Log& log);

// Exit codes: 0 success, 1 user error (flags, config, inputs), 2 internal error.
int run(int argc, char** argv);

}  // namespace forge::cli
