#pragma once

#include <chrono>
#include <string>

#include "extc/gateway/gateway.hpp"

namespace extc {

struct HttpBackendOptions {
  // Full chat-completions URL, e.g. https://api.openai.com/v1/chat/completions
  std::string endpoint;
  std::string api_key;  // sent as a bearer token when non-empty
  std::chrono::seconds connect_timeout{10};
  std::chrono::seconds read_timeout{120};
};

/// OpenAI-compatible chat-completions client.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendOptions options);
  ChatResponse send(const ChatRequest& request, const RequestMeta& meta) override;

 private:
  HttpBackendOptions options_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

/// Request body sent to the endpoint (seed_tag is not transmitted).
nlohmann::ordered_json http_request_body(const ChatRequest& request);

/// Parses a chat-completions payload; throws protocol-error when malformed.
ChatResponse parse_http_response(const std::string& body);

}  // namespace extc
