#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "extc/decisionset/label_space.hpp"
#include "extc/distill/distill.hpp"
#include "extc/gateway/gateway.hpp"
#include "extc/gateway/templates.hpp"
#include "extc/grpo/batcher.hpp"
#include "extc/revise/revise.hpp"
#include "extc/spo/optimizer.hpp"

namespace extc::cli {

inline constexpr int kSchemaVersion = 1;

struct GatewayConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  std::optional<std::filesystem::path> cache_dir;
  std::size_t max_in_flight = 8;
  int max_retries = 3;
  int backoff_ms = 250;
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
};

struct DistillConfig {
  TeacherSampling sampling;
  std::uint64_t seed = 42;
};

struct BatcherConfig {
  BatchOptions options;
  std::size_t steps = 1;
  std::uint64_t seed = 42;
  std::string model = "student";
  double temperature = 1.0;
  bool aux_enabled = false;
  std::string aux_model = "gpt-4o-mini";
  int aux_top_logprobs = 20;
};

struct DataPaths {
  std::optional<std::filesystem::path> train;
  std::optional<std::filesystem::path> val;
  std::optional<std::filesystem::path> test;
};

struct RunConfig {
  std::filesystem::path source;  // the config file itself
  std::string digest;            // SHA-256 of its bytes
  std::vector<std::string> label_names;
  std::map<std::string, int> priority;
  std::map<std::string, std::string> aliases;
  TaskProfile task;
  DataPaths data;
  GatewayConfig gateway;
  OptimizerConfig optimizer;
  DistillConfig distill;
  BatcherConfig batcher;
  ReviseConfig revise;

  LabelSpace labels() const;
};

/// Parses and validates a config document. Relative data paths resolve
/// against `base_dir`. Errors are config errors prefixed with the field path.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace extc::cli
