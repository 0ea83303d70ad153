#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "extc/decisionset/label_space.hpp"
#include "extc/decisionset/types.hpp"

namespace extc {

// Rulebook text format:
//
//   RULE <rule_id> LABEL <target_label> NAME <name>
//   <body, verbatim, any number of lines>
//   END RULE
//
// Blank lines between blocks are ignored. A body may not contain a line that
// reads exactly "END RULE".

std::string serialize_sop(std::span<const Rule> rules);

/// Parsed rules carry NewSynthesis provenance at `iteration`; the file format
/// does not record lineage.
std::vector<Rule> parse_sop(std::string_view text, const LabelSpace& labels, int iteration = 0);

std::vector<Rule> load_sop(const std::filesystem::path& path, const LabelSpace& labels);
void save_sop(const std::filesystem::path& path, std::span<const Rule> rules);

}  // namespace extc
