#include "extc/gateway/mock_backend.hpp"

#include <algorithm>
#include <cctype>

#include "extc/common/error.hpp"
#include "extc/common/io.hpp"
#include "extc/common/text.hpp"
#include "extc/gateway/parsers.hpp"
#include "extc/gateway/templates.hpp"

namespace extc {

void MockBackend::on(std::string template_id, Responder responder) {
  std::lock_guard lock(mutex_);
  responders_.emplace_back(std::move(template_id), std::move(responder));
}

void MockBackend::reply(std::string template_id, std::string content) {
  on(std::move(template_id),
     [content = std::move(content)](const ChatRequest&, const RequestMeta&) {
       return std::optional<ChatResponse>(ChatResponse{content, std::nullopt});
     });
}

ChatResponse MockBackend::send(const ChatRequest& request, const RequestMeta& meta) {
  std::vector<Responder> candidates;
  {
    std::lock_guard lock(mutex_);
    ++calls_;
    ++calls_by_template_[meta.template_id];
    for (const auto& [id, r] : responders_) {
      if (id == "*" || id == meta.template_id) candidates.push_back(r);
    }
  }
  for (const auto& r : candidates) {
    if (auto response = r(request, meta)) return *response;
  }
  fail(Errc::kProtocol, "mock backend has no response for template '" + meta.template_id + "'");
}

std::size_t MockBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::size_t MockBackend::calls_for(std::string_view template_id) const {
  std::lock_guard lock(mutex_);
  auto it = calls_by_template_.find(std::string(template_id));
  return it == calls_by_template_.end() ? 0 : it->second;
}

namespace {

bool matches(const nlohmann::json& when, const ChatRequest& request, const RequestMeta& meta) {
  for (const auto& [key, cond] : when.items()) {
    std::optional<std::string> value;
    if (key == "@seed_tag") {
      value = request.seed_tag;
    } else if (auto it = meta.bindings.find(key); it != meta.bindings.end()) {
      value = it->second;
    }
    if (!value) return false;
    for (const auto& [op, arg] : cond.items()) {
      const std::string a = arg.get<std::string>();
      if (op == "contains") {
        if (value->find(a) == std::string::npos) return false;
      } else if (op == "equals") {
        if (*value != a) return false;
      } else if (op == "sha256") {
        if (io::sha256_hex(*value) != a) return false;
      }
    }
  }
  return true;
}

void check_script_entry(const nlohmann::json& e, std::size_t i) {
  const std::string where = "mock script responses[" + std::to_string(i) + "]: ";
  if (!e.is_object()) fail(Errc::kConfig, where + "must be an object");
  if (!e.contains("content") || !e["content"].is_string()) {
    fail(Errc::kConfig, where + "needs a string 'content'");
  }
  if (e.contains("when")) {
    if (!e["when"].is_object()) fail(Errc::kConfig, where + "'when' must be an object");
    for (const auto& [key, cond] : e["when"].items()) {
      if (!cond.is_object()) fail(Errc::kConfig, where + "condition on '" + key + "' must be an object");
      for (const auto& [op, arg] : cond.items()) {
        if (op != "contains" && op != "equals" && op != "sha256") {
          fail(Errc::kConfig, where + "unknown matcher '" + op + "'");
        }
        if (!arg.is_string()) fail(Errc::kConfig, where + "matcher argument must be a string");
      }
    }
  }
}

}  // namespace

std::shared_ptr<MockBackend> MockBackend::from_script(const nlohmann::json& script) {
  if (!script.is_object()) fail(Errc::kConfig, "mock script must be a JSON object");
  auto backend = std::make_shared<MockBackend>();

  if (auto it = script.find("responses"); it != script.end()) {
    if (!it->is_array()) fail(Errc::kConfig, "mock script 'responses' must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& e = (*it)[i];
      check_script_entry(e, i);
      const std::string tid = e.value("template", "*");
      const nlohmann::json when = e.value("when", nlohmann::json::object());
      ChatResponse response = response_from_json(e);
      backend->on(tid, [when, response](const ChatRequest& req, const RequestMeta& meta) {
        return matches(when, req, meta) ? std::optional<ChatResponse>(response) : std::nullopt;
      });
    }
  }

  if (auto it = script.find("planted_rules"); it != script.end()) {
    if (!it->is_array()) fail(Errc::kConfig, "mock script 'planted_rules' must be an array");
    std::vector<PlantedRule> planted;
    for (const auto& r : *it) {
      if (!r.is_object() || !r.contains("label") || !r["label"].is_string()) {
        fail(Errc::kConfig, "planted rule needs a string 'label'");
      }
      PlantedRule p;
      p.label = r["label"].get<std::string>();
      p.triggers = r.value("triggers", std::vector<std::string>{});
      p.exceptions = r.value("exceptions", std::vector<std::string>{});
      if (p.triggers.empty()) fail(Errc::kConfig, "planted rule for '" + p.label + "' has no triggers");
      planted.push_back(std::move(p));
    }
    install_planted_oracle(*backend, std::move(planted));
  }
  return backend;
}

std::shared_ptr<MockBackend> MockBackend::from_script_file(const std::filesystem::path& path) {
  auto j = nlohmann::json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded()) fail(Errc::kConfig, "mock script " + path.string() + " is not valid JSON");
  return from_script(j);
}

// ---- planted world ----

std::vector<std::string> marked_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find("[[", pos)) != std::string_view::npos) {
    const auto end = text.find("]]", pos + 2);
    if (end == std::string_view::npos) break;
    std::string word = text::to_lower(text::trim(text.substr(pos + 2, end - pos - 2)));
    if (!word.empty() && std::find(out.begin(), out.end(), word) == out.end()) {
      out.push_back(std::move(word));
    }
    pos = end + 2;
  }
  return out;
}

RuleMarkers rule_markers(std::string_view rule_text) {
  enum { kTrigger, kExceptions, kOther } section = kTrigger;
  std::string triggers, exceptions;
  for (auto line : text::split_lines(rule_text)) {
    const std::string_view t = text::trim(line);
    if (text::starts_with_icase(t, "Trigger Pattern")) {
      section = kTrigger;
    } else if (text::starts_with_icase(t, "Exceptions")) {
      section = kExceptions;
    } else if (text::starts_with_icase(t, "Example")) {
      section = kOther;
    }
    if (section == kTrigger) {
      triggers += line;
      triggers += '\n';
    } else if (section == kExceptions) {
      exceptions += line;
      exceptions += '\n';
    }
  }
  return {marked_words(triggers), marked_words(exceptions)};
}

bool contains_word(std::string_view text, std::string_view word) {
  if (word.empty()) return false;
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  const std::string hay = text::to_lower(text);
  const std::string needle = text::to_lower(word);
  std::size_t pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    const bool left = pos == 0 || !is_word(hay[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right = end == hay.size() || !is_word(hay[end]);
    if (left && right) return true;
    pos = end;
  }
  return false;
}

namespace {

std::string binding(const RequestMeta& meta, const char* key) {
  auto it = meta.bindings.find(key);
  return it == meta.bindings.end() ? std::string() : it->second;
}

std::optional<ChatResponse> text_response(std::string content) {
  return ChatResponse{std::move(content), std::nullopt};
}

std::string bullet_list(const std::vector<std::string>& items, std::string_view fmt_prefix,
                        std::string_view fmt_suffix) {
  std::string out;
  for (const auto& w : items) {
    out += "- ";
    out += fmt_prefix;
    out += "[[" + w + "]]";
    out += fmt_suffix;
    out += "\n";
  }
  return out;
}

std::string rule_body(const std::vector<std::string>& triggers,
                      const std::vector<std::string>& exceptions, std::string_view label) {
  std::string body = "Trigger Pattern:\n" + bullet_list(triggers, "The text mentions ", ".");
  body += "\nExceptions:\n";
  body += exceptions.empty() ? "- None.\n" : bullet_list(exceptions, "The text also mentions ", ".");
  body += "\nExamples\nSource text: ... " + (triggers.empty() ? std::string() : triggers.front()) +
          " ...\nWrong:   predicted the default label\nCorrect: " + std::string(label);
  return body;
}

std::string rule_name(const std::vector<std::string>& triggers,
                      const std::vector<std::string>& exceptions) {
  std::string name = "Mentions " + text::join(triggers, " or ");
  if (!exceptions.empty()) name += " unless " + text::join(exceptions, " or ");
  return name;
}

}  // namespace

void install_planted_oracle(MockBackend& backend, std::vector<PlantedRule> planted) {
  for (auto& p : planted) {
    for (auto& w : p.triggers) w = text::to_lower(w);
    for (auto& w : p.exceptions) w = text::to_lower(w);
  }
  auto world = std::make_shared<const std::vector<PlantedRule>>(std::move(planted));

  backend.on(std::string(tmpl::kRuleClassifier), [](const ChatRequest&, const RequestMeta& meta) {
    const auto markers = rule_markers(binding(meta, "rule_text"));
    const std::string report = binding(meta, "report");
    bool fired = false;
    for (const auto& w : markers.triggers) fired = fired || contains_word(report, w);
    for (const auto& w : markers.exceptions) fired = fired && !contains_word(report, w);
    const std::string verdict = fired ? binding(meta, "RULE_LABEL") : binding(meta, "ABSTAIN");
    return text_response(std::string("REASONING:\n") +
                         (fired ? "A trigger word is present and no exception applies."
                                : "The trigger does not apply to this report.") +
                         "\n\nFINAL PREDICTION: " + verdict);
  });

  backend.on(std::string(tmpl::kGradientExceptions),
             [world](const ChatRequest&, const RequestMeta& meta) {
               const auto markers = rule_markers(binding(meta, "RULE"));
               const std::string report = binding(meta, "REPORT");
               std::vector<std::string> found;
               for (const auto& p : *world) {
                 bool related = false;
                 for (const auto& t : p.triggers) {
                   related = related || std::find(markers.triggers.begin(), markers.triggers.end(),
                                                  t) != markers.triggers.end();
                 }
                 if (!related) continue;
                 for (const auto& e : p.exceptions) {
                   if (contains_word(report, e) &&
                       std::find(found.begin(), found.end(), e) == found.end()) {
                     found.push_back(e);
                   }
                 }
               }
               return text_response(
                   "analysis: The rule fired although the report contains a restricting word.\n\n"
                   "exceptions:\n" +
                   bullet_list(found, "Do not fire when the text mentions ", "."));
             });

  backend.on(std::string(tmpl::kGradientErrorPattern),
             [world](const ChatRequest&, const RequestMeta& meta) {
               const std::string report = binding(meta, "REPORT");
               const std::string gold = binding(meta, "LABEL");
               std::vector<std::string> found;
               for (const auto& p : *world) {
                 if (!text::iequals(p.label, gold)) continue;
                 bool blocked = false;
                 for (const auto& e : p.exceptions) blocked = blocked || contains_word(report, e);
                 if (blocked) continue;
                 for (const auto& t : p.triggers) {
                   if (contains_word(report, t) &&
                       std::find(found.begin(), found.end(), t) == found.end()) {
                     found.push_back(t);
                   }
                 }
               }
               if (found.empty()) return text_response("summary:\n\npoints:\n");
               return text_response("summary: Reports like this one signal " + gold +
                                    " but no rule covers them.\n\npoints:\n" +
                                    bullet_list(found, "", " indicates " + gold));
             });

  backend.on(std::string(tmpl::kRuleSynthesis),
             [world](const ChatRequest&, const RequestMeta& meta) {
               const std::string label = binding(meta, "TARGET_LABEL");
               std::string out = "error_analysis: Uncovered trigger words.\n\n";
               for (const auto& w : marked_words(binding(meta, "ERROR_PATTERNS"))) {
                 // a fresh rule starts without exceptions; they arrive through revisions
                 out += "<RULE_NAME>" + rule_name({w}, {}) + "</RULE_NAME>\n<RULE_DESCRIPTION>\n" +
                        rule_body({w}, {}, label) + "\n</RULE_DESCRIPTION>\n\n";
               }
               return text_response(out);
             });

  backend.on(std::string(tmpl::kRuleUpdate), [](const ChatRequest&, const RequestMeta& meta) {
    const auto markers = rule_markers(binding(meta, "RULE"));
    auto exceptions = markers.exceptions;
    for (const auto& w : marked_words(binding(meta, "EXCEPTIONS"))) {
      if (std::find(exceptions.begin(), exceptions.end(), w) == exceptions.end()) {
        exceptions.push_back(w);
      }
    }
    const std::string label = binding(meta, "RULE_LABEL");
    return text_response("<RULE_NAME>" + rule_name(markers.triggers, exceptions) +
                         "</RULE_NAME>\n<RULE_DESCRIPTION>\n" +
                         rule_body(markers.triggers, exceptions, label) +
                         "\n</RULE_DESCRIPTION>\n");
  });
}

}  // namespace extc
