#include "extc/gateway/parsers.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "extc/common/error.hpp"
#include "extc/common/text.hpp"

namespace extc {

namespace {

using text::trim;

constexpr std::string_view kDecoration = "*`\"'<>[]_#";

// Strips whitespace, markdown emphasis, quotes, brackets and a trailing
// period until nothing changes.
std::string_view clean_value(std::string_view v) {
  for (;;) {
    const std::string_view before = v;
    v = trim(v);
    while (!v.empty() && kDecoration.find(v.front()) != std::string_view::npos) v.remove_prefix(1);
    while (!v.empty() && (kDecoration.find(v.back()) != std::string_view::npos || v.back() == '.')) {
      v.remove_suffix(1);
    }
    if (v == before) return v;
  }
}

// If `line` is a header line for `header` (e.g. "LABEL:"), returns the text
// after it. Leading markdown (#, *) and a closing "**" are tolerated.
std::optional<std::string_view> header_rest(std::string_view line, std::string_view header) {
  std::string_view t = trim(line);
  while (!t.empty() && (t.front() == '*' || t.front() == '#')) t.remove_prefix(1);
  t = trim(t);
  if (!text::starts_with_icase(t, header)) return std::nullopt;
  t.remove_prefix(header.size());
  while (!t.empty() && t.front() == '*') t.remove_prefix(1);
  return trim(t);
}

std::string_view first_token(std::string_view v) {
  v = trim(v);
  const auto sp = v.find_first_of(" \t(,;");
  return sp == std::string_view::npos ? v : v.substr(0, sp);
}

std::string collapse_spaces(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : trim(s)) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

ParseFailure failure(ParseReason reason, std::string_view raw) {
  return ParseFailure{reason, std::string(raw)};
}

bool is_score_token(std::string_view token, int& value) {
  token = trim(token);
  if (token.size() != 1 || token[0] < '1' || token[0] > '5') return false;
  value = token[0] - '0';
  return true;
}

}  // namespace

std::string_view to_string(ParseReason reason) {
  switch (reason) {
    case ParseReason::kMissingLabelHeader: return "missing-label-header";
    case ParseReason::kLabelNotInSpace: return "label-not-in-space";
    case ParseReason::kMalformedRuleBlock: return "malformed-rule-block";
    case ParseReason::kMissingFinalPrediction: return "missing-final-prediction";
  }
  return "missing-label-header";
}

Parsed<ReasonedLabel> parse_reasoning_label(std::string_view text, const LabelSpace& labels) {
  const auto lines = text::split_lines(text);
  std::optional<std::size_t> reasoning_line;
  std::string_view reasoning_rest;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (auto rest = header_rest(lines[i], "REASONING:")) {
      reasoning_line = i;
      reasoning_rest = *rest;
      break;
    }
  }
  if (!reasoning_line) return failure(ParseReason::kMissingLabelHeader, text);

  std::optional<std::size_t> label_line;
  std::string_view label_rest;
  for (std::size_t i = lines.size(); i-- > *reasoning_line + 1;) {
    if (auto rest = header_rest(lines[i], "LABEL:")) {
      label_line = i;
      label_rest = *rest;
      break;
    }
  }
  if (!label_line) return failure(ParseReason::kMissingLabelHeader, text);

  const std::size_t begin = static_cast<std::size_t>(reasoning_rest.data() - text.data());
  const std::size_t end = static_cast<std::size_t>(lines[*label_line].data() - text.data());
  ReasonedLabel out;
  out.reasoning = std::string(trim(text.substr(begin, end > begin ? end - begin : 0)));

  auto label = labels.resolve(clean_value(label_rest));
  if (!label) label = labels.resolve(clean_value(first_token(label_rest)));
  if (!label) return failure(ParseReason::kLabelNotInSpace, text);
  out.label = *label;
  return out;
}

std::string format_reasoning_label(std::string_view reasoning, std::string_view label) {
  std::string out = "REASONING:\n";
  out += reasoning;
  out += "\n\nLABEL: ";
  out += label;
  return out;
}

Parsed<Firing> parse_firing(std::string_view text, LabelId rule_label, const LabelSpace& labels,
                            std::string_view abstain_token) {
  const auto lines = text::split_lines(text);
  std::optional<std::string_view> value;
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (auto rest = header_rest(lines[i], "FINAL PREDICTION:")) {
      value = *rest;
      for (std::size_t j = i + 1; clean_value(*value).empty() && j < lines.size(); ++j) {
        value = lines[j];
      }
      break;
    }
  }
  if (!value) return failure(ParseReason::kMissingFinalPrediction, text);

  const auto& name = labels.name(rule_label);
  const auto& alias = labels.alias(rule_label);
  auto classify = [&](std::string_view v) -> std::optional<Firing> {
    if (v.empty()) return std::nullopt;
    if (text::iequals(v, name) || (alias && text::iequals(v, *alias))) return Firing::kFired;
    if (text::iequals(v, abstain_token)) return Firing::kAbstain;
    return std::nullopt;
  };
  if (auto f = classify(clean_value(*value))) return *f;
  if (auto f = classify(clean_value(first_token(*value)))) return *f;
  return failure(ParseReason::kLabelNotInSpace, text);
}

std::string RuleIdAllocator::allocate() {
  const std::uint64_t n = next_.fetch_add(1);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04llu", static_cast<unsigned long long>(n));
  return prefix_ + buf;
}

namespace {

constexpr std::string_view kNameOpen = "<RULE_NAME>";
constexpr std::string_view kNameClose = "</RULE_NAME>";
constexpr std::string_view kDescOpen = "<RULE_DESCRIPTION>";
constexpr std::string_view kDescClose = "</RULE_DESCRIPTION>";

struct RawBlock {
  std::string name;
  std::string body;
};

std::vector<RawBlock> scan_rule_blocks(std::string_view text) {
  std::vector<RawBlock> blocks;
  std::size_t pos = 0;
  constexpr auto npos = std::string_view::npos;
  while (true) {
    const std::size_t name_open = text.find(kNameOpen, pos);
    if (name_open == npos) break;
    const std::size_t name_start = name_open + kNameOpen.size();
    const std::size_t name_close = text.find(kNameClose, name_start);
    if (name_close == npos) break;
    const std::size_t next_name = text.find(kNameOpen, name_start);
    if (next_name != npos && next_name < name_close) {
      pos = next_name;
      continue;
    }
    const std::size_t after_name = name_close + kNameClose.size();
    const std::size_t desc_open = text.find(kDescOpen, after_name);
    if (desc_open == npos) break;
    const std::size_t stray = text.find(kNameOpen, after_name);
    if (stray != npos && stray < desc_open) {
      pos = stray;
      continue;
    }
    const std::size_t body_start = desc_open + kDescOpen.size();
    const std::size_t desc_close = text.find(kDescClose, body_start);
    if (desc_close == npos) break;
    const std::size_t nested = text.find(kNameOpen, body_start);
    if (nested != npos && nested < desc_close) {
      pos = nested;
      continue;
    }
    RawBlock b;
    b.name = collapse_spaces(text.substr(name_start, name_close - name_start));
    b.body = std::string(trim(text.substr(body_start, desc_close - body_start)));
    if (!b.name.empty() && !b.body.empty()) blocks.push_back(std::move(b));
    pos = desc_close + kDescClose.size();
  }
  return blocks;
}

}  // namespace

Parsed<std::vector<RuleDraft>> parse_rule_candidates(std::string_view text, RuleIdAllocator& ids) {
  auto blocks = scan_rule_blocks(text);
  if (blocks.empty()) return failure(ParseReason::kMalformedRuleBlock, text);
  std::vector<RuleDraft> drafts;
  for (auto& b : blocks) drafts.push_back({ids.allocate(), std::move(b.name), std::move(b.body)});
  return drafts;
}

namespace {

void split_items(std::string_view s, std::vector<std::string>& out);

std::vector<std::string> json_items(const nlohmann::json& v) {
  std::vector<std::string> out;
  if (v.is_string()) {
    split_items(v.get<std::string>(), out);
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (e.is_string()) {
        const std::string item = collapse_spaces(e.get<std::string>());
        if (!item.empty()) out.push_back(item);
      } else if (!e.is_null()) {
        out.push_back(e.dump());
      }
    }
  }
  return out;
}

std::string json_text(const nlohmann::json& v) {
  if (v.is_string()) return std::string(trim(v.get<std::string>()));
  if (v.is_array()) {
    std::string out;
    for (const auto& item : json_items(v)) {
      if (!out.empty()) out += "\n";
      out += item;
    }
    return out;
  }
  return v.is_null() ? std::string() : v.dump();
}

// Length of a leading bullet marker ("- ", "* ", "1. ", "2) "), or 0.
std::size_t bullet_len(std::string_view t) {
  if (t.empty()) return 0;
  if (t.front() == '-' || t.front() == '*' || t.front() == '+') {
    if (t.size() == 1 || t[1] == ' ' || t[1] == '\t') return 1;
    return 0;
  }
  if (t.substr(0, 3) == "\xE2\x80\xA2") return 3;  // U+2022
  std::size_t i = 0;
  while (i < t.size() && i < 3 && t[i] >= '0' && t[i] <= '9') ++i;
  if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')') &&
      (i + 1 == t.size() || t[i + 1] == ' ')) {
    return i + 1;
  }
  return 0;
}

bool is_placeholder_item(std::string_view s) {
  s = clean_value(s);
  return s.empty() || text::iequals(s, "none") || text::iequals(s, "n/a") ||
         text::iequals(s, "no exceptions");
}

void split_items(std::string_view s, std::vector<std::string>& out) {
  std::string current;
  auto flush = [&] {
    std::string item = collapse_spaces(current);
    if (!is_placeholder_item(item)) out.push_back(std::move(item));
    current.clear();
  };
  for (auto line : text::split_lines(s)) {
    std::string_view t = trim(line);
    if (t.empty()) continue;
    if (const std::size_t b = bullet_len(t); b > 0) {
      if (!current.empty()) flush();
      current = std::string(trim(t.substr(b)));
    } else if (!current.empty()) {
      current += " ";
      current += t;
    } else {
      current = std::string(t);
    }
  }
  if (!current.empty()) flush();
}

enum class Section { kNone, kAnalysis, kExceptions, kSummary, kPoints, kOther };

std::optional<std::pair<Section, std::string_view>> section_heading(std::string_view line) {
  std::string_view t = trim(line);
  if (bullet_len(t) > 0 && !(t.size() > 1 && t[0] == '*' && t[1] == '*')) return std::nullopt;
  while (!t.empty() && (t.front() == '#' || t.front() == '*')) t.remove_prefix(1);
  t = trim(t);
  static const std::pair<std::string_view, Section> kNames[] = {
      {"error_analysis", Section::kOther}, {"analysis", Section::kAnalysis},
      {"exceptions", Section::kExceptions}, {"summary", Section::kSummary},
      {"points", Section::kPoints},        {"key points", Section::kPoints},
  };
  for (const auto& [name, section] : kNames) {
    if (!text::starts_with_icase(t, name)) continue;
    std::string_view rest = t.substr(name.size());
    while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
    if (!rest.empty() && rest.front() == ':') {
      rest.remove_prefix(1);
      while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
      return std::make_pair(section, trim(rest));
    }
    if (trim(rest).empty()) return std::make_pair(section, std::string_view{});
  }
  return std::nullopt;
}

}  // namespace

GradientFields parse_gradient_fields(std::string_view text) {
  GradientFields out;
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    auto j = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (!j.is_discarded() && j.is_object()) {
      bool any = false;
      auto take = [&](const char* key) -> const nlohmann::json* {
        auto it = j.find(key);
        if (it == j.end()) return nullptr;
        any = true;
        return &*it;
      };
      if (auto v = take("analysis")) out.analysis = json_text(*v);
      if (auto v = take("exceptions")) out.exceptions = json_items(*v);
      if (auto v = take("summary")) out.summary = json_text(*v);
      if (auto v = take("points")) out.points = json_items(*v);
      if (any) return out;
    }
  }

  Section section = Section::kNone;
  std::string analysis, summary, exceptions, points;
  auto sink = [&]() -> std::string* {
    switch (section) {
      case Section::kAnalysis: return &analysis;
      case Section::kExceptions: return &exceptions;
      case Section::kSummary: return &summary;
      case Section::kPoints: return &points;
      default: return nullptr;
    }
  };
  for (auto line : text::split_lines(text)) {
    if (auto h = section_heading(line)) {
      section = h->first;
      line = h->second;
      if (line.empty()) continue;
    }
    if (std::string* s = sink()) {
      *s += line;
      *s += "\n";
    }
  }
  out.analysis = std::string(trim(analysis));
  out.summary = std::string(trim(summary));
  split_items(exceptions, out.exceptions);
  split_items(points, out.points);
  return out;
}

std::vector<Strategy> parse_strategies(std::string_view text) {
  std::vector<Strategy> out;
  std::set<int> seen;
  constexpr std::string_view kOpen = "<STRATEGY";
  constexpr std::string_view kClose = "</STRATEGY>";
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find(kOpen, pos);
    if (open == std::string_view::npos) break;
    const std::size_t tag_end = text.find('>', open);
    if (tag_end == std::string_view::npos) break;
    const std::size_t close = text.find(kClose, tag_end);
    if (close == std::string_view::npos) break;
    const std::size_t next_open = text.find(kOpen, open + kOpen.size());
    pos = close + kClose.size();
    if (next_open != std::string_view::npos && next_open < close) {
      pos = next_open;
      continue;
    }

    std::string_view attrs = text.substr(open + kOpen.size(), tag_end - open - kOpen.size());
    const auto id_at = attrs.find("id");
    if (id_at == std::string_view::npos) continue;
    std::string_view id_text = attrs.substr(id_at + 2);
    while (!id_text.empty() && (id_text.front() == '=' || id_text.front() == ' ' ||
                                id_text.front() == '"' || id_text.front() == '\'')) {
      id_text.remove_prefix(1);
    }
    int id = 0;
    auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
    if (ec != std::errc() || ptr == id_text.data()) continue;

    const std::string_view inner = text.substr(tag_end + 1, close - tag_end - 1);
    const auto lines = text::split_lines(inner);
    std::optional<std::string_view> analysis_rest;
    std::optional<std::size_t> label_line;
    std::string_view label_rest;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (!analysis_rest) {
        if (auto r = header_rest(lines[i], "Analysis:")) analysis_rest = *r;
      }
      if (auto r = header_rest(lines[i], "Label:")) {
        label_line = i;
        label_rest = *r;
      }
    }
    if (!label_line) continue;
    Strategy s;
    s.id = id;
    s.label = collapse_spaces(clean_value(label_rest));
    if (s.label.empty()) continue;
    if (analysis_rest) {
      const auto begin = static_cast<std::size_t>(analysis_rest->data() - inner.data());
      const auto end = static_cast<std::size_t>(lines[*label_line].data() - inner.data());
      if (end > begin) s.analysis = std::string(trim(inner.substr(begin, end - begin)));
    }
    if (!seen.insert(id).second) continue;
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_strategies(std::span<const Strategy> strategies) {
  std::string out;
  for (const auto& s : strategies) {
    if (!out.empty()) out += "\n\n";
    out += "<STRATEGY id=\"" + std::to_string(s.id) + "\">\nAnalysis: " + s.analysis +
           "\nLabel: " + s.label + "\n</STRATEGY>";
  }
  return out;
}

std::optional<int> parse_cluster_id(std::string_view text, std::span<const int> valid_ids) {
  const std::string_view v = clean_value(text);
  if (v.empty() || text::iequals(v, "OTHER")) return std::nullopt;
  std::size_t i = 0;
  while (i < v.size() && (v[i] < '0' || v[i] > '9')) ++i;
  if (i == v.size()) return std::nullopt;
  // a reply mentioning OTHER anywhere is not a confident id
  if (text::to_lower(v).find("other") != std::string::npos) return std::nullopt;
  int id = 0;
  auto [ptr, ec] = std::from_chars(v.data() + i, v.data() + v.size(), id);
  if (ec != std::errc()) return std::nullopt;
  for (int valid : valid_ids) {
    if (valid == id) return id;
  }
  return std::nullopt;
}

std::optional<Verdict> parse_equivalence(std::string_view text) {
  std::vector<std::string_view> answers;
  for (auto line : text::split_lines(text)) {
    std::string_view t = trim(line);
    if (t.empty()) continue;
    for (std::string_view prefix : {"LINE1:", "LINE2:", "LINE 1:", "LINE 2:"}) {
      if (auto r = header_rest(t, prefix)) {
        t = *r;
        break;
      }
    }
    answers.push_back(clean_value(t));
  }
  if (answers.empty()) return std::nullopt;
  const std::string_view first = clean_value(first_token(answers[0]));
  if (text::iequals(first, "NO")) return Verdict{false, Preference::kEither};
  if (!text::iequals(first, "YES")) return std::nullopt;
  Verdict v{true, Preference::kEither};
  for (std::size_t i = 1; i < answers.size(); ++i) {
    std::string norm;
    for (char c : answers[i]) {
      if (c != ' ' && c != '_' && c != '-') norm.push_back(static_cast<char>(std::toupper(c)));
    }
    if (norm.starts_with("RULE1")) {
      v.preference = Preference::kRule1;
      break;
    }
    if (norm.starts_with("RULE2")) {
      v.preference = Preference::kRule2;
      break;
    }
    if (norm.starts_with("EITHER")) break;
  }
  return v;
}

Parsed<std::variant<SkipVerdict, RuleDraft>> parse_cluster_rule(
    std::string_view text, std::span<const std::string> accepted_label_tokens,
    RuleIdAllocator& ids) {
  auto blocks = scan_rule_blocks(text);
  if (blocks.empty()) {
    for (auto line : text::split_lines(text)) {
      if (header_rest(line, "SKIP:")) return std::variant<SkipVerdict, RuleDraft>(SkipVerdict{});
    }
    return failure(ParseReason::kMalformedRuleBlock, text);
  }
  RawBlock& b = blocks.front();
  const auto lines = text::split_lines(b.body);
  const std::string_view first = lines.empty() ? std::string_view{} : trim(lines.front());
  bool label_ok = false;
  if (first.starts_with("Rule Label: ")) {
    const std::string_view token = trim(first.substr(12));
    for (const auto& accepted : accepted_label_tokens) label_ok = label_ok || token == accepted;
  }
  if (!label_ok) return failure(ParseReason::kMalformedRuleBlock, text);
  return std::variant<SkipVerdict, RuleDraft>(
      RuleDraft{ids.allocate(), std::move(b.name), std::move(b.body)});
}

double judge_expected_score(std::span<const TokenProb> answer_position) {
  double mass = 0.0;
  double weighted = 0.0;
  for (const auto& tp : answer_position) {
    require(std::isfinite(tp.prob) && tp.prob >= 0.0, "token probability must be finite and >= 0");
    int value = 0;
    if (!is_score_token(tp.token, value)) continue;
    mass += tp.prob;
    weighted += value * tp.prob;
  }
  if (!(mass > 0.0)) fail(Errc::kUnscoreable, "no score token among the top candidates");
  return weighted / mass;
}

double judge_expected_score(const ChatResponse& response) {
  if (!response.top_logprobs || response.top_logprobs->empty()) {
    fail(Errc::kUnscoreable, "response carries no token probabilities");
  }
  const auto& positions = *response.top_logprobs;
  int value = 0;
  for (const auto& pos : positions) {
    if (!is_score_token(pos.token, value)) continue;
    if (pos.top.empty()) return value;
    return judge_expected_score(pos.top);
  }
  for (const auto& pos : positions) {
    for (const auto& tp : pos.top) {
      if (is_score_token(tp.token, value)) return judge_expected_score(pos.top);
    }
  }
  fail(Errc::kUnscoreable, "no answer position with a score token");
}

}  // namespace extc
