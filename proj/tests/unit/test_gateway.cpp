#include <doctest.h>

#include <atomic>
#include <filesystem>

#include "extc/common/error.hpp"
#include "extc/common/parallel.hpp"
#include "extc/gateway/gateway.hpp"
#include "extc/gateway/mock_backend.hpp"
#include "extc/gateway/templates.hpp"

using namespace extc;
namespace fs = std::filesystem;

namespace {

// Fails with `code` the first `failures` times, then echoes the last message.
class FlakyBackend : public ChatBackend {
 public:
  FlakyBackend(int failures, Errc code) : failures_(failures), code_(code) {}
  ChatResponse send(const ChatRequest& request, const RequestMeta&) override {
    ++calls;
    if (failures_-- > 0) throw Error(code_, "flaky");
    return ChatResponse{"echo:" + request.messages.back().content, std::nullopt};
  }
  std::atomic<int> calls{0};

 private:
  std::atomic<int> failures_;
  Errc code_;
};

ChatRequest request(std::string text, double temperature = 0.0) {
  ChatRequest r;
  r.model = "m";
  r.messages.push_back({Role::kUser, std::move(text)});
  r.temperature = temperature;
  return r;
}

GatewayOptions fast() { return {3, std::chrono::milliseconds(0)}; }

}  // namespace

TEST_CASE("identical requests are served from the cache") {
  auto backend = std::make_shared<FlakyBackend>(0, Errc::kBackend);
  Gateway gw(backend, std::make_shared<ResponseCache>(), fast());
  CHECK(gw.complete(request("a")).content == "echo:a");
  CHECK(gw.complete(request("a")).content == "echo:a");
  CHECK(gw.complete(request("a", 0.7)).content == "echo:a");
  CHECK(backend->calls == 2);
  const auto s = gw.stats();
  CHECK(s.requests == 3);
  CHECK(s.cache_hits == 1);
  CHECK(s.cache_hit_rate() == doctest::Approx(1.0 / 3));
}

TEST_CASE("bypass skips the cache both ways") {
  auto backend = std::make_shared<FlakyBackend>(0, Errc::kBackend);
  auto cache = std::make_shared<ResponseCache>();
  Gateway gw(backend, cache, fast());
  gw.complete(request("a"), CachePolicy::kBypass);
  CHECK(cache->size() == 0);
  gw.complete(request("a"));
  gw.complete(request("a"), CachePolicy::kBypass);
  CHECK(backend->calls == 3);
}

TEST_CASE("transient failures are retried, protocol errors are not") {
  auto flaky = std::make_shared<FlakyBackend>(2, Errc::kBackend);
  Gateway gw(flaky, nullptr, fast());
  CHECK(gw.complete(request("x")).content == "echo:x");
  CHECK(gw.stats().retries == 2);

  auto dead = std::make_shared<FlakyBackend>(100, Errc::kBackend);
  Gateway gw2(dead, nullptr, fast());
  try {
    gw2.complete(request("x"));
    FAIL("expected backend error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kBackend);
  }
  CHECK(dead->calls == 4);

  auto bad = std::make_shared<FlakyBackend>(1, Errc::kProtocol);
  Gateway gw3(bad, nullptr, fast());
  CHECK_THROWS_AS(gw3.complete(request("x")), Error);
  CHECK(bad->calls == 1);
}

TEST_CASE("failed requests are not cached") {
  auto flaky = std::make_shared<FlakyBackend>(1, Errc::kProtocol);
  auto cache = std::make_shared<ResponseCache>();
  Gateway gw(flaky, cache, fast());
  CHECK_THROWS(gw.complete(request("x")));
  CHECK(cache->size() == 0);
  CHECK(gw.complete(request("x")).content == "echo:x");
}

TEST_CASE("invalid requests are rejected before the backend") {
  auto backend = std::make_shared<FlakyBackend>(0, Errc::kBackend);
  Gateway gw(backend, nullptr, fast());
  CHECK_THROWS_AS(gw.complete(request("x", -1.0)), Error);
  ChatRequest empty;
  empty.model = "m";
  CHECK_THROWS_AS(gw.complete(empty), Error);
  CHECK(backend->calls == 0);
}

TEST_CASE("directory cache persists across gateways") {
  const auto dir = fs::temp_directory_path() / "extc_gateway_cache";
  fs::remove_all(dir);
  {
    auto backend = std::make_shared<FlakyBackend>(0, Errc::kBackend);
    Gateway gw(backend, std::make_shared<ResponseCache>(dir), fast());
    gw.complete(request("persist"));
  }
  auto backend = std::make_shared<FlakyBackend>(0, Errc::kBackend);
  auto cache = std::make_shared<ResponseCache>(dir);
  CHECK(cache->size() == 1);
  Gateway gw(backend, cache, fast());
  CHECK(gw.complete(request("persist")).content == "echo:persist");
  CHECK(backend->calls == 0);
  fs::remove_all(dir);
}

TEST_CASE("stats count requests per template") {
  auto mock = std::make_shared<MockBackend>();
  mock->reply("*", "ok");
  Gateway gw(mock, std::make_shared<ResponseCache>(), fast());
  const auto p = render(tmpl::kLabelOnly, {{"task_framing", "f"},
                                           {"input_tag", "<X>"},
                                           {"input_close_tag", "</X>"},
                                           {"text", "t"},
                                           {"labels", "a / b"}});
  gw.complete(p, "m", 0.0);
  gw.complete(p, "m", 0.0);
  gw.complete(p, "m", 1.0, std::nullopt, "s1");
  const auto s = gw.stats();
  CHECK(s.requests_for(tmpl::kLabelOnly) == 3);
  CHECK(s.requests_for(tmpl::kRuleUpdate) == 0);
  CHECK(mock->calls() == 2);
  gw.reset_stats();
  CHECK(gw.stats().requests == 0);
}

TEST_CASE("concurrent completions share one cache") {
  auto backend = std::make_shared<FlakyBackend>(0, Errc::kBackend);
  Gateway gw(backend, std::make_shared<ResponseCache>(), fast());
  parallel_for(64, 8, [&](std::size_t i) { gw.complete(request("k" + std::to_string(i % 16))); });
  CHECK(gw.stats().requests == 64);
  CHECK(backend->calls >= 16);
  CHECK(backend->calls <= 64);
}
