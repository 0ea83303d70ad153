#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "extc/gateway/gateway.hpp"

namespace extc {

/// Returns a response, or nullopt to let the next responder try.
using Responder =
    std::function<std::optional<ChatResponse>(const ChatRequest&, const RequestMeta&)>;

/// Deterministic offline backend. Responders are registered per template id
/// ("*" matches any) and consulted in registration order; a request nobody
/// answers is a protocol error.
class MockBackend : public ChatBackend {
 public:
  void on(std::string template_id, Responder responder);
  /// Shorthand for a fixed reply.
  void reply(std::string template_id, std::string content);

  ChatResponse send(const ChatRequest& request, const RequestMeta& meta) override;

  std::size_t calls() const;
  std::size_t calls_for(std::string_view template_id) const;

  /// Builds a backend from a JSON script:
  ///   {"planted_rules": [{"label", "triggers": [..], "exceptions": [..]}],
  ///    "responses": [{"template", "when": {<binding or "@seed_tag">:
  ///                   {"contains"|"equals"|"sha256": str}}, "content",
  ///                   "top_logprobs": [{"token", "top": [[tok, p], ..]}]}]}
  /// Scripted responses take precedence over the planted-rule responders.
  static std::shared_ptr<MockBackend> from_script(const nlohmann::json& script);
  static std::shared_ptr<MockBackend> from_script_file(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::vector<std::pair<std::string, Responder>> responders_;
  std::size_t calls_ = 0;
  std::map<std::string, std::size_t> calls_by_template_;
};

/// A hidden rule of a synthetic world: fires for `label` when any trigger
/// word occurs in the text and no exception word does.
struct PlantedRule {
  std::string label;
  std::vector<std::string> triggers;
  std::vector<std::string> exceptions;
};

/// Registers responders that act as classifier, gradient and update models
/// for a planted world. Rules they write mark words as [[word]] in their
/// "Trigger Pattern" and "Exceptions" sections; the classifier reads those
/// markers back, so learned rules behave exactly as their text says.
void install_planted_oracle(MockBackend& backend, std::vector<PlantedRule> planted);

/// Words marked [[word]] in `text`, in first-appearance order.
std::vector<std::string> marked_words(std::string_view text);

/// Marked words in the trigger and exception sections of a rule text.
struct RuleMarkers {
  std::vector<std::string> triggers;
  std::vector<std::string> exceptions;
};
RuleMarkers rule_markers(std::string_view rule_text);

/// Whole-word, case-insensitive containment.
bool contains_word(std::string_view text, std::string_view word);

}  // namespace extc
