#include "extc/gateway/http_backend.hpp"

#include <cmath>

#include <httplib.h>

#include "extc/common/error.hpp"

namespace extc {

HttpChatBackend::HttpChatBackend(HttpBackendOptions options) : options_(std::move(options)) {
  const auto scheme_end = options_.endpoint.find("://");
  require(scheme_end != std::string::npos, "endpoint must be an absolute http(s) URL");
  const auto path_start = options_.endpoint.find('/', scheme_end + 3);
  base_ = options_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : options_.endpoint.substr(path_start);
}

nlohmann::ordered_json http_request_body(const ChatRequest& request) {
  nlohmann::ordered_json body;
  body["model"] = request.model;
  auto& messages = body["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  body["temperature"] = request.temperature;
  if (request.top_logprobs && *request.top_logprobs > 0) {
    body["logprobs"] = true;
    body["top_logprobs"] = *request.top_logprobs;
  }
  return body;
}

ChatResponse parse_http_response(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(Errc::kProtocol, "response is not a JSON object");
  auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) {
    fail(Errc::kProtocol, "response has no choices");
  }
  const auto& choice = (*choices)[0];
  const auto message = choice.find("message");
  if (message == choice.end() || !message->is_object()) fail(Errc::kProtocol, "choice has no message");
  const auto content = message->find("content");
  if (content == message->end() || !content->is_string()) {
    fail(Errc::kProtocol, "message content missing or not a string");
  }
  ChatResponse r;
  r.content = content->get<std::string>();

  const auto logprobs = choice.find("logprobs");
  if (logprobs != choice.end() && logprobs->is_object()) {
    const auto positions = logprobs->find("content");
    if (positions != logprobs->end() && positions->is_array()) {
      std::vector<TokenPosition> out;
      for (const auto& p : *positions) {
        if (!p.is_object() || !p.contains("token") || !p["token"].is_string()) {
          fail(Errc::kProtocol, "malformed logprobs position");
        }
        TokenPosition pos;
        pos.token = p["token"].get<std::string>();
        for (const auto& alt : p.value("top_logprobs", nlohmann::json::array())) {
          if (!alt.is_object() || !alt.contains("token") || !alt.contains("logprob") ||
              !alt["logprob"].is_number()) {
            fail(Errc::kProtocol, "malformed top_logprobs entry");
          }
          pos.top.push_back({alt["token"].get<std::string>(), std::exp(alt["logprob"].get<double>())});
        }
        out.push_back(std::move(pos));
      }
      r.top_logprobs = std::move(out);
    }
  }
  return r;
}

ChatResponse HttpChatBackend::send(const ChatRequest& request, const RequestMeta&) {
  httplib::Client client(base_);
  client.set_connection_timeout(options_.connect_timeout);
  client.set_read_timeout(options_.read_timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  auto res = client.Post(path_, headers, http_request_body(request).dump(), "application/json");
  if (!res) fail(Errc::kBackend, "transport error: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    fail(Errc::kBackend, "HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    fail(Errc::kProtocol, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  return parse_http_response(res->body);
}

}  // namespace extc
