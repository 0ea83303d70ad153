#include "config.hpp"

#include <set>

#include "extc/common/error.hpp"
#include "extc/common/io.hpp"

namespace extc::cli {

namespace {

using nlohmann::json;

// Walks a JSON object while remembering where it is, so every error names
// the offending field. Keys that are never read are reported as unknown.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail_at(path_, "expected an object");
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.contains(it.key())) fail_at(field(it.key()), "unknown field");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(node_.contains(key) ? node_.at(key) : empty, field(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  std::string path_of(const std::string& key) const { return field(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = convert<T>(node_.at(key), field(key));
  }

  template <typename T>
  void get_range(const std::string& key, T& out, T lo, T hi) {
    get(key, out);
    if (out < lo || out > hi) {
      fail_at(field(key), "must be within [" + num(lo) + ", " + num(hi) + "]");
    }
  }

  void model(const std::string& key, ModelSettings& out) {
    if (!has(key)) return;
    Reader r = child(key);
    r.get("model", out.model);
    r.get_range("temperature", out.temperature, 0.0, 2.0);
  }

  [[noreturn]] static void fail_at(const std::string& path, const std::string& what) {
    fail(Errc::kConfig, path + ": " + what);
  }

 private:
  template <typename T>
  static std::string num(T v) {
    if constexpr (std::is_floating_point_v<T>) {
      auto s = std::to_string(v);
      s.erase(s.find_last_not_of('0') + 1);
      if (s.ends_with('.')) s.pop_back();
      return s;
    } else {
      return std::to_string(v);
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail_at(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail_at(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail_at(path, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        fail_at(path, "expected a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail_at(path, "expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) fail_at(path, "expected an array of strings");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<std::string>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

std::filesystem::path existing_path(Reader& r, const std::string& key,
                                    const std::filesystem::path& base_dir) {
  std::string s;
  r.get(key, s);
  std::filesystem::path p(s);
  if (p.is_relative()) p = base_dir / p;
  if (!std::filesystem::exists(p)) Reader::fail_at(r.path_of(key), "file not found: " + p.string());
  return p;
}

}  // namespace

LabelSpace RunConfig::labels() const { return LabelSpace(label_names, priority, aliases); }

RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  {
    Reader root(doc, "");
    if (!root.has("schema_version")) Reader::fail_at("schema_version", "missing");
    int version = 0;
    root.get("schema_version", version);
    if (version != kSchemaVersion) {
      Reader::fail_at("schema_version", "unsupported version " + std::to_string(version) +
                                            " (expected " + std::to_string(kSchemaVersion) + ")");
    }

    {
      Reader l = root.child("labels");
      if (!l.has("names")) Reader::fail_at("labels.names", "missing");
      l.get("names", cfg.label_names);
      if (cfg.label_names.size() < 2) Reader::fail_at("labels.names", "need at least two labels");
      if (l.has("priority")) {
        Reader p = l.child("priority");
        for (const auto& name : cfg.label_names) {
          int rank = 0;
          if (!p.has(name)) Reader::fail_at(p.path_of(name), "missing priority");
          p.get(name, rank);
          cfg.priority[name] = rank;
        }
      } else {
        for (std::size_t i = 0; i < cfg.label_names.size(); ++i) {
          cfg.priority[cfg.label_names[i]] = static_cast<int>(i + 1);
        }
      }
      if (l.has("aliases")) {
        const auto& a = l.raw("aliases");
        Reader ar(a, l.path_of("aliases"));
        for (auto it = a.begin(); it != a.end(); ++it) ar.get(it.key(), cfg.aliases[it.key()]);
      }
      try {
        (void)cfg.labels();
      } catch (const Error& e) {
        Reader::fail_at("labels", e.what());
      }
    }

    {
      Reader t = root.child("task");
      t.get("task_framing", cfg.task.task_framing);
      t.get("input_tag", cfg.task.input_tag);
      t.get("input_noun", cfg.task.input_noun);
      t.get("classification_task", cfg.task.classification_task);
      t.get("task_description", cfg.task.task_description);
      t.get("evidence_phrase", cfg.task.evidence_phrase);
      t.get("input_phrase", cfg.task.input_phrase);
      t.get("abstain_token", cfg.task.abstain_token);
      if (cfg.task.input_tag.empty()) Reader::fail_at("task.input_tag", "missing");
      if (cfg.task.classification_task.empty()) {
        Reader::fail_at("task.classification_task", "missing");
      }
    }

    if (root.has("data")) {
      Reader d = root.child("data");
      if (d.has("train")) cfg.data.train = existing_path(d, "train", base_dir);
      if (d.has("val")) cfg.data.val = existing_path(d, "val", base_dir);
      if (d.has("test")) cfg.data.test = existing_path(d, "test", base_dir);
    }

    if (root.has("gateway")) {
      Reader g = root.child("gateway");
      g.get("endpoint", cfg.gateway.endpoint);
      g.get("api_key_env", cfg.gateway.api_key_env);
      if (g.has("cache_dir")) {
        std::string dir;
        g.get("cache_dir", dir);
        std::filesystem::path p(dir);
        cfg.gateway.cache_dir = p.is_relative() ? base_dir / p : p;
      }
      g.get_range("max_in_flight", cfg.gateway.max_in_flight, std::size_t{1}, std::size_t{256});
      g.get_range("max_retries", cfg.gateway.max_retries, 0, 20);
      g.get_range("backoff_ms", cfg.gateway.backoff_ms, 0, 600000);
      g.get_range("connect_timeout_s", cfg.gateway.connect_timeout_s, 1, 3600);
      g.get_range("read_timeout_s", cfg.gateway.read_timeout_s, 1, 3600);
    }

    auto& o = cfg.optimizer;
    if (root.has("optimizer")) {
      Reader r = root.child("optimizer");
      r.get_range("T", o.T, 0, 1000);
      r.get_range("batch_size", o.batch_size, std::size_t{1}, std::size_t{100000});
      r.get_range("K", o.K, std::size_t{1}, std::size_t{64});
      r.get_range("lambda", o.lambda, 0.0, 1e6);
      r.get_range("beam_width", o.beam_width, std::size_t{1}, std::size_t{10000});
      r.get_range("max_new_rules_per_label", o.max_new_rules_per_label, std::size_t{1},
                  std::size_t{64});
      r.get("seed", o.seed);
      r.get("rule_id_prefix", o.rule_id_prefix);
      r.model("classifier", o.classifier);
      r.model("gradient", o.gradient);
      r.model("update", o.update);
    }
    o.max_in_flight = cfg.gateway.max_in_flight;

    if (root.has("distill")) {
      Reader r = root.child("distill");
      r.get_range("M", cfg.distill.sampling.M, std::size_t{1}, std::size_t{64});
      r.get("model", cfg.distill.sampling.model);
      r.get_range("temperature", cfg.distill.sampling.temperature, 0.0, 2.0);
      r.get("seed", cfg.distill.seed);
    }
    cfg.distill.sampling.max_in_flight = cfg.gateway.max_in_flight;

    auto& b = cfg.batcher;
    if (root.has("batcher")) {
      Reader r = root.child("batcher");
      r.get_range("B", b.options.B, std::size_t{1}, std::size_t{100000});
      r.get_range("G", b.options.G, std::size_t{2}, std::size_t{1024});
      r.get_range("kappa", b.options.kappa, std::size_t{1}, std::size_t{1000});
      r.get_range("epsilon", b.options.epsilon, 1e-300, 1.0);
      r.get_range("lambda_aux", b.options.lambda_aux, 0.0, 100.0);
      r.get_range("steps", b.steps, std::size_t{1}, std::size_t{1000000});
      r.get("seed", b.seed);
      r.get("model", b.model);
      r.get_range("temperature", b.temperature, 0.0, 2.0);
      if (r.has("aux")) {
        Reader a = r.child("aux");
        a.get("enabled", b.aux_enabled);
        a.get("model", b.aux_model);
        a.get_range("top_logprobs", b.aux_top_logprobs, 1, 20);
      }
    }
    b.options.max_in_flight = cfg.gateway.max_in_flight;
    if (b.options.B < cfg.label_names.size()) {
      Reader::fail_at("batcher.B", "must be at least the number of labels");
    }

    auto& v = cfg.revise;
    if (root.has("revise")) {
      Reader r = root.child("revise");
      r.get_range("rounds", v.rounds, 1, 20);
      r.get_range("max_discovery_traces", v.max_discovery_traces, std::size_t{0},
                  std::size_t{100000});
      r.get_range("max_positive_pairs", v.max_positive_pairs, std::size_t{0}, std::size_t{1000});
      r.get_range("max_negative_pairs", v.max_negative_pairs, std::size_t{0}, std::size_t{1000});
      r.get("target_labels", v.target_labels);
      r.get_range("K_add", v.K_add, std::size_t{1}, std::size_t{64});
      r.get_range("lambda", v.lambda, 0.0, 1e6);
      r.get_range("beam_width", v.beam_width, std::size_t{1}, std::size_t{10000});
      r.get("seed", v.seed);
      r.get("rule_id_prefix", v.rule_id_prefix);
      r.model("analysis", v.analysis);
      r.model("assign", v.assign);
      r.model("synthesis", v.synthesis);
      r.model("judge", v.judge);
      r.model("classifier", v.classifier);
      const LabelSpace labels = cfg.labels();
      for (std::size_t i = 0; i < v.target_labels.size(); ++i) {
        const auto id = labels.find(v.target_labels[i]);
        const std::string path = "revise.target_labels[" + std::to_string(i) + "]";
        if (!id) Reader::fail_at(path, "unknown label '" + v.target_labels[i] + "'");
        if (*id == labels.default_label()) Reader::fail_at(path, "cannot target the default label");
      }
      if (v.max_positive_pairs + v.max_negative_pairs == 0) {
        Reader::fail_at("revise.max_positive_pairs", "pair caps must allow at least one pair");
      }
    }
    v.max_in_flight = cfg.gateway.max_in_flight;
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::kConfig, path.string() + ": " + e.what());
  }
  RunConfig cfg = parse_config(doc, std::filesystem::absolute(path).parent_path());
  cfg.source = path;
  cfg.digest = io::sha256_hex(bytes);
  return cfg;
}

}  // namespace extc::cli
