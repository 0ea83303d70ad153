#include "extc/gateway/chat.hpp"

#include "extc/common/error.hpp"
#include "extc/common/io.hpp"

namespace extc {

std::string_view to_string(Role role) { return role == Role::kSystem ? "system" : "user"; }

nlohmann::ordered_json canonical_json(const ChatRequest& request) {
  nlohmann::ordered_json j;
  j["model"] = request.model;
  auto& messages = j["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : request.messages) {
    nlohmann::ordered_json msg;
    msg["role"] = std::string(to_string(m.role));
    msg["content"] = m.content;
    messages.push_back(std::move(msg));
  }
  j["temperature"] = request.temperature;
  j["top_logprobs"] = request.top_logprobs ? nlohmann::ordered_json(*request.top_logprobs)
                                           : nlohmann::ordered_json(nullptr);
  j["seed_tag"] = request.seed_tag ? nlohmann::ordered_json(*request.seed_tag)
                                   : nlohmann::ordered_json(nullptr);
  return j;
}

std::string canonical_form(const ChatRequest& request) { return canonical_json(request).dump(); }

std::string request_hash(const ChatRequest& request) {
  return io::sha256_hex(canonical_form(request));
}

nlohmann::ordered_json response_to_json(const ChatResponse& response) {
  nlohmann::ordered_json j;
  j["content"] = response.content;
  if (response.top_logprobs) {
    auto& positions = j["top_logprobs"] = nlohmann::ordered_json::array();
    for (const auto& pos : *response.top_logprobs) {
      nlohmann::ordered_json p;
      p["token"] = pos.token;
      auto& top = p["top"] = nlohmann::ordered_json::array();
      for (const auto& tp : pos.top) top.push_back({tp.token, tp.prob});
      positions.push_back(std::move(p));
    }
  } else {
    j["top_logprobs"] = nullptr;
  }
  return j;
}

ChatResponse response_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("content") || !j["content"].is_string()) {
    fail(Errc::kProtocol, "response record lacks a string 'content'");
  }
  ChatResponse r;
  r.content = j["content"].get<std::string>();
  auto it = j.find("top_logprobs");
  if (it != j.end() && !it->is_null()) {
    if (!it->is_array()) fail(Errc::kProtocol, "'top_logprobs' must be an array");
    std::vector<TokenPosition> positions;
    for (const auto& p : *it) {
      TokenPosition pos;
      if (!p.is_object()) fail(Errc::kProtocol, "malformed token position");
      pos.token = p.value("token", "");
      for (const auto& tp : p.value("top", nlohmann::json::array())) {
        if (!tp.is_array() || tp.size() != 2 || !tp[0].is_string() || !tp[1].is_number()) {
          fail(Errc::kProtocol, "malformed top-logprob entry");
        }
        pos.top.push_back({tp[0].get<std::string>(), tp[1].get<double>()});
      }
      positions.push_back(std::move(pos));
    }
    r.top_logprobs = std::move(positions);
  }
  return r;
}

void validate(const ChatRequest& request) {
  require(!request.messages.empty(), "chat request has no messages");
  require(request.temperature >= 0.0, "temperature must be non-negative");
  require(!request.top_logprobs || *request.top_logprobs >= 0, "top_logprobs must be >= 0");
}

}  // namespace extc
