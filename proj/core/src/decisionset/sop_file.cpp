#include "extc/decisionset/sop_file.hpp"

#include "extc/common/error.hpp"
#include "extc/common/io.hpp"
#include "extc/common/text.hpp"

namespace extc {

namespace {

constexpr std::string_view kEnd = "END RULE";

bool body_has_terminator(std::string_view body) {
  for (auto line : text::split_lines(body)) {
    if (line == kEnd) return true;
  }
  return false;
}

}  // namespace

std::string serialize_sop(std::span<const Rule> rules) {
  std::string out;
  for (const auto& rule : rules) {
    require(!body_has_terminator(rule.body()),
            "rule " + rule.id() + " body contains a terminator line");
    out += "RULE " + rule.id() + " LABEL " + rule.target_label() + " NAME " + rule.name() + "\n";
    out += rule.body();
    out += "\n";
    out += kEnd;
    out += "\n";
  }
  return out;
}

std::vector<Rule> parse_sop(std::string_view text, const LabelSpace& labels, int iteration) {
  std::vector<Rule> rules;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return true;
  };
  auto where = [&] { return "sop line " + std::to_string(line_no) + ": "; };

  std::string_view line;
  while (next_line(line)) {
    if (text::trim(line).empty()) continue;
    if (!line.starts_with("RULE ")) fail(Errc::kInvalidInput, where() + "expected a RULE header");

    // RULE <id> LABEL <label> NAME <name>
    std::string_view rest = line.substr(5);
    const auto sp1 = rest.find(' ');
    if (sp1 == std::string_view::npos) fail(Errc::kInvalidInput, where() + "truncated header");
    std::string id(rest.substr(0, sp1));
    rest = rest.substr(sp1 + 1);
    if (!rest.starts_with("LABEL ")) fail(Errc::kInvalidInput, where() + "missing LABEL");
    rest = rest.substr(6);
    const auto sp2 = rest.find(' ');
    if (sp2 == std::string_view::npos) fail(Errc::kInvalidInput, where() + "truncated header");
    std::string label(rest.substr(0, sp2));
    rest = rest.substr(sp2 + 1);
    if (!rest.starts_with("NAME ") && rest != "NAME") {
      fail(Errc::kInvalidInput, where() + "missing NAME");
    }
    std::string name(rest.size() > 5 ? rest.substr(5) : std::string_view{});
    if (!name.empty() && name.back() == '\r') name.pop_back();

    const std::size_t body_start = pos;
    std::size_t body_end = std::string_view::npos;
    while (next_line(line)) {
      std::string_view l = line;
      if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
      if (l == kEnd) {
        // the newline before the terminator belongs to the format, not the body
        body_end = pos - line.size() - 1;
        break;
      }
    }
    if (body_end == std::string_view::npos) {
      fail(Errc::kInvalidInput, "sop: rule " + id + " has no END RULE line");
    }
    std::string body;
    if (body_end > body_start) body = std::string(text.substr(body_start, body_end - 1 - body_start));
    for (const auto& r : rules) {
      if (r.id() == id) fail(Errc::kInvalidInput, "sop: duplicate rule id " + id);
    }
    rules.push_back(Rule::create(std::move(id), std::move(name), std::move(label), std::move(body),
                                 Provenance{Origin::kNewSynthesis, {}, iteration}, labels));
  }
  return rules;
}

std::vector<Rule> load_sop(const std::filesystem::path& path, const LabelSpace& labels) {
  return parse_sop(io::read_file(path), labels);
}

void save_sop(const std::filesystem::path& path, std::span<const Rule> rules) {
  io::write_file_atomic(path, serialize_sop(rules));
}

}  // namespace extc
