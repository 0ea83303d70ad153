#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace extc {

enum class Role { kSystem, kUser };

std::string_view to_string(Role role);

struct Message {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.0;
  std::optional<int> top_logprobs;
  // Distinguishes repeated stochastic samples of the same prompt; it is part
  // of the cache key but is not sent over the wire.
  std::optional<std::string> seed_tag;
};

struct TokenProb {
  std::string token;
  double prob = 0.0;

  friend bool operator==(const TokenProb&, const TokenProb&) = default;
};

/// One generated position: the sampled token plus its top-k alternatives.
struct TokenPosition {
  std::string token;
  std::vector<TokenProb> top;

  friend bool operator==(const TokenPosition&, const TokenPosition&) = default;
};

struct ChatResponse {
  std::string content;
  std::optional<std::vector<TokenPosition>> top_logprobs;

  friend bool operator==(const ChatResponse&, const ChatResponse&) = default;
};

/// Side-channel description of how a request was built. Not part of the
/// cache key; mock backends use it to answer by template and binding.
struct RequestMeta {
  std::string template_id;
  std::map<std::string, std::string> bindings;
};

/// Field-ordered compact JSON form of the request; the cache key is its
/// SHA-256.
nlohmann::ordered_json canonical_json(const ChatRequest& request);
std::string canonical_form(const ChatRequest& request);
std::string request_hash(const ChatRequest& request);

nlohmann::ordered_json response_to_json(const ChatResponse& response);
ChatResponse response_from_json(const nlohmann::json& j);

void validate(const ChatRequest& request);

}  // namespace extc
