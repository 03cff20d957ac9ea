#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace forge::data {

// Contents of a file under assets/, embedded at build time.
std::string_view asset(std::string_view name);

// One pattern per line; blank lines and '#' comments dropped, ends trimmed.
std::vector<std::string> parse_pattern_list(std::string_view text);
std::vector<std::string> load_pattern_file(const std::filesystem::path& path);

}  // namespace forge::data
