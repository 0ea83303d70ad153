#include "extc/decisionset/dataset_file.hpp"

#include <nlohmann/json.hpp>
#include <unordered_set>

#include "extc/common/error.hpp"
#include "extc/common/io.hpp"
#include "extc/common/text.hpp"

namespace extc {

using ordered_json = nlohmann::ordered_json;

std::string serialize_dataset(std::span<const Example> examples, const LabelSpace& labels) {
  std::string out;
  for (const auto& ex : examples) {
    ordered_json j;
    j["id"] = ex.id;
    j["text"] = ex.text;
    j["label"] = labels.name(ex.gold);
    if (ex.evidence) j["evidence"] = *ex.evidence;
    j["split"] = std::string(to_string(ex.split));
    if (ex.difficulty) j["difficulty"] = std::string(to_string(*ex.difficulty));
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Example> parse_dataset(std::string_view text, const LabelSpace& labels) {
  std::vector<Example> out;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(text)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const std::string where = "dataset line " + std::to_string(line_no) + ": ";
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(Errc::kInvalidInput, where + "not a JSON object");
    auto str = [&](const char* key, bool required) -> std::optional<std::string> {
      auto it = j.find(key);
      if (it == j.end() || it->is_null()) {
        if (required) fail(Errc::kInvalidInput, where + "missing field '" + key + "'");
        return std::nullopt;
      }
      if (it->is_number_integer() && std::string_view(key) == "label") {
        return std::to_string(it->get<long long>());
      }
      if (!it->is_string()) fail(Errc::kInvalidInput, where + "field '" + key + "' must be a string");
      return it->get<std::string>();
    };
    Example ex;
    ex.id = *str("id", true);
    ex.text = *str("text", true);
    const std::string label = *str("label", true);
    auto gold = labels.resolve(label);
    if (!gold) fail(Errc::kInvalidInput, where + "unknown label '" + label + "'");
    ex.gold = *gold;
    ex.evidence = str("evidence", false);
    ex.split = parse_split(*str("split", true));
    if (auto d = str("difficulty", false)) ex.difficulty = parse_difficulty(*d);
    if (!seen.insert(ex.id).second) fail(Errc::kInvalidInput, where + "duplicate id '" + ex.id + "'");
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> load_dataset(const std::filesystem::path& path, const LabelSpace& labels) {
  return parse_dataset(io::read_file(path), labels);
}

void save_dataset(const std::filesystem::path& path, std::span<const Example> examples,
                  const LabelSpace& labels) {
  io::write_file_atomic(path, serialize_dataset(examples, labels));
}

std::vector<Example> filter_split(std::span<const Example> examples, Split split) {
  std::vector<Example> out;
  for (const auto& ex : examples) {
    if (ex.split == split) out.push_back(ex);
  }
  return out;
}

}  // namespace extc
