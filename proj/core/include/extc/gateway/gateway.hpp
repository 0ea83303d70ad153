#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "extc/gateway/chat.hpp"
#include "extc/gateway/templates.hpp"

namespace extc {

/// Transport to a model. Implementations throw Error(kBackend) for transient
/// failures (retried by the gateway) and Error(kProtocol) for malformed
/// payloads (not retried).
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse send(const ChatRequest& request, const RequestMeta& meta) = 0;
};

/// Content-addressed response store. With a directory, each entry is one
/// JSON file named by the request hash holding the canonical request and the
/// response; without one, entries live in memory only.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<ChatResponse> get(const std::string& hash) const;
  void put(const std::string& hash, const ChatRequest& request, const ChatResponse& response);
  std::size_t size() const;
  const std::optional<std::filesystem::path>& dir() const noexcept { return dir_; }

 private:
  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, ChatResponse> memory_;
};

enum class CachePolicy { kUse, kBypass };

struct GatewayOptions {
  int max_retries = 3;
  std::chrono::milliseconds backoff{250};  // doubled after each failed attempt
};

struct GatewayStats {
  std::size_t requests = 0;       // complete() invocations
  std::size_t backend_calls = 0;  // attempts that reached the backend
  std::size_t cache_hits = 0;
  std::size_t retries = 0;
  std::map<std::string, std::size_t> requests_by_template;
  std::map<std::string, std::size_t> backend_calls_by_template;

  std::size_t requests_for(std::string_view template_id) const;
  double cache_hit_rate() const {
    return requests == 0 ? 0.0 : static_cast<double>(cache_hits) / static_cast<double>(requests);
  }
};

class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<ResponseCache> cache = nullptr,
          GatewayOptions options = {});

  ChatResponse complete(const ChatRequest& request, CachePolicy policy = CachePolicy::kUse,
                        const RequestMeta& meta = {});

  /// Renders nothing itself: builds the request from an already rendered
  /// prompt and forwards its metadata.
  ChatResponse complete(const Prompt& prompt, const std::string& model, double temperature,
                        std::optional<int> top_logprobs = std::nullopt,
                        std::optional<std::string> seed_tag = std::nullopt,
                        CachePolicy policy = CachePolicy::kUse);

  GatewayStats stats() const;
  void reset_stats();

 private:
  ChatResponse send_with_retries(const ChatRequest& request, const RequestMeta& meta);

  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  GatewayOptions options_;
  mutable std::mutex stats_mutex_;
  GatewayStats stats_;
};

}  // namespace extc
