#include "extc/gateway/gateway.hpp"

#include <thread>

#include <spdlog/spdlog.h>

#include "extc/common/error.hpp"
#include "extc/common/io.hpp"

namespace extc {

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(*dir_, ec);
  if (ec) fail(Errc::kFile, "cannot create cache directory " + dir_->string());
}

std::optional<ChatResponse> ResponseCache::get(const std::string& hash) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = memory_.find(hash); it != memory_.end()) return it->second;
  }
  if (!dir_) return std::nullopt;
  const auto path = *dir_ / (hash + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  auto j = nlohmann::json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.contains("response")) {
    spdlog::warn("ignoring unreadable cache entry {}", path.string());
    return std::nullopt;
  }
  ChatResponse r = response_from_json(j["response"]);
  std::lock_guard lock(mutex_);
  memory_.emplace(hash, r);
  return r;
}

void ResponseCache::put(const std::string& hash, const ChatRequest& request,
                        const ChatResponse& response) {
  {
    std::lock_guard lock(mutex_);
    memory_.insert_or_assign(hash, response);
  }
  if (!dir_) return;
  nlohmann::ordered_json j;
  j["request"] = canonical_json(request);
  j["response"] = response_to_json(response);
  io::write_file_atomic(*dir_ / (hash + ".json"), j.dump(2) + "\n");
}

std::size_t ResponseCache::size() const {
  std::size_t n = 0;
  if (dir_) {
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(*dir_, ec)) {
      if (entry.path().extension() == ".json") ++n;
    }
    return n;
  }
  std::lock_guard lock(mutex_);
  return memory_.size();
}

std::size_t GatewayStats::requests_for(std::string_view template_id) const {
  auto it = requests_by_template.find(std::string(template_id));
  return it == requests_by_template.end() ? 0 : it->second;
}

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<ResponseCache> cache,
                 GatewayOptions options)
    : backend_(std::move(backend)), cache_(std::move(cache)), options_(options) {
  require(backend_ != nullptr, "gateway needs a backend");
  require(options_.max_retries >= 0, "max_retries must be >= 0");
}

ChatResponse Gateway::complete(const ChatRequest& request, CachePolicy policy,
                               const RequestMeta& meta) {
  validate(request);
  {
    std::lock_guard lock(stats_mutex_);
    ++stats_.requests;
    ++stats_.requests_by_template[meta.template_id];
  }
  const bool use_cache = cache_ && policy == CachePolicy::kUse;
  std::string hash;
  if (use_cache) {
    hash = request_hash(request);
    if (auto hit = cache_->get(hash)) {
      std::lock_guard lock(stats_mutex_);
      ++stats_.cache_hits;
      return *hit;
    }
  }
  ChatResponse response = send_with_retries(request, meta);
  if (use_cache) cache_->put(hash, request, response);
  return response;
}

ChatResponse Gateway::complete(const Prompt& prompt, const std::string& model, double temperature,
                               std::optional<int> top_logprobs,
                               std::optional<std::string> seed_tag, CachePolicy policy) {
  return complete(make_request(prompt, model, temperature, top_logprobs, std::move(seed_tag)),
                  policy, prompt.meta());
}

ChatResponse Gateway::send_with_retries(const ChatRequest& request, const RequestMeta& meta) {
  auto delay = options_.backoff;
  for (int attempt = 0;; ++attempt) {
    {
      std::lock_guard lock(stats_mutex_);
      ++stats_.backend_calls;
      ++stats_.backend_calls_by_template[meta.template_id];
    }
    try {
      return backend_->send(request, meta);
    } catch (const Error& e) {
      if (e.code() != Errc::kBackend || attempt >= options_.max_retries) throw;
      spdlog::warn("backend attempt {} failed ({}); retrying in {} ms", attempt + 1, e.what(),
                   delay.count());
      {
        std::lock_guard lock(stats_mutex_);
        ++stats_.retries;
      }
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

void Gateway::reset_stats() {
  std::lock_guard lock(stats_mutex_);
  stats_ = {};
}

}  // namespace extc
