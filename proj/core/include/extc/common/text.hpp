#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace extc::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Splits on '\n'; a trailing '\r' on each line is dropped.
std::vector<std::string_view> split_lines(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// True when `token` is non-empty and contains no whitespace.
bool is_single_token(std::string_view token);

}  // namespace extc::text
