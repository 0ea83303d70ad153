#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "extc/decisionset/label_space.hpp"
#include "extc/decisionset/types.hpp"

namespace extc {

// One JSON object per line with keys in this order:
//   {"id", "text", "label", "evidence"?, "split", "difficulty"?}
// "label" may be a label name or its alias.

std::string serialize_dataset(std::span<const Example> examples, const LabelSpace& labels);
std::vector<Example> parse_dataset(std::string_view text, const LabelSpace& labels);

std::vector<Example> load_dataset(const std::filesystem::path& path, const LabelSpace& labels);
void save_dataset(const std::filesystem::path& path, std::span<const Example> examples,
                  const LabelSpace& labels);

std::vector<Example> filter_split(std::span<const Example> examples, Split split);

}  // namespace extc
