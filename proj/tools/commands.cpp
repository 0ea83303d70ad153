#include "commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "config.hpp"
#include "extc/common/io.hpp"
#include "extc/common/parallel.hpp"
#include "extc/common/text.hpp"
#include "extc/decisionset/dataset_file.hpp"
#include "extc/decisionset/metrics.hpp"
#include "extc/decisionset/sop_file.hpp"
#include "extc/decisionset/subset_search.hpp"
#include "extc/gateway/http_backend.hpp"
#include "extc/gateway/mock_backend.hpp"

namespace extc::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

int exit_status(Errc code) { return 10 + static_cast<int>(code); }

namespace {

struct Runtime {
  RunConfig cfg;
  LabelSpace labels;
  std::string backend_kind;
  std::string mock_digest;
  std::unique_ptr<Gateway> gateway;

  Runtime(const std::string& config_path, const std::string& mock_path)
      : cfg(load_config(config_path)), labels(cfg.labels()) {
    std::shared_ptr<ChatBackend> backend;
    if (!mock_path.empty()) {
      backend = MockBackend::from_script_file(mock_path);
      backend_kind = "mock";
      mock_digest = io::sha256_hex(io::read_file(mock_path));
    } else {
      HttpBackendOptions opts;
      opts.endpoint = cfg.gateway.endpoint;
      if (const char* key = std::getenv(cfg.gateway.api_key_env.c_str())) opts.api_key = key;
      if (opts.api_key.empty()) {
        spdlog::warn("{} is not set; requests go out without a bearer token",
                     cfg.gateway.api_key_env);
      }
      opts.connect_timeout = std::chrono::seconds(cfg.gateway.connect_timeout_s);
      opts.read_timeout = std::chrono::seconds(cfg.gateway.read_timeout_s);
      backend = std::make_shared<HttpChatBackend>(std::move(opts));
      backend_kind = "http";
    }
    auto cache = cfg.gateway.cache_dir ? std::make_shared<ResponseCache>(*cfg.gateway.cache_dir)
                                       : std::make_shared<ResponseCache>();
    GatewayOptions gopts;
    gopts.max_retries = cfg.gateway.max_retries;
    gopts.backoff = std::chrono::milliseconds(cfg.gateway.backoff_ms);
    gateway = std::make_unique<Gateway>(std::move(backend), std::move(cache), gopts);
  }
};

ojson stats_json(const GatewayStats& s) {
  ojson j;
  j["requests"] = s.requests;
  j["backend_calls"] = s.backend_calls;
  j["cache_hits"] = s.cache_hits;
  j["cache_hit_rate"] = s.cache_hit_rate();
  j["retries"] = s.retries;
  j["requests_by_template"] = s.requests_by_template;
  j["backend_calls_by_template"] = s.backend_calls_by_template;
  return j;
}

void log_stats(const GatewayStats& s) {
  spdlog::info("gateway: {} requests, {} backend calls, cache hit rate {:.3f}", s.requests,
               s.backend_calls, s.cache_hit_rate());
  for (const auto& [id, n] : s.requests_by_template) spdlog::info("  {}: {} requests", id, n);
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args) {
    j_["tool"] = "extc";
    j_["version"] = "0.1.0";
    j_["command"] = std::move(command);
    j_["args"] = args;
    j_["artifacts"] = ojson::object();
  }

  void runtime(const Runtime& rt) {
    j_["config"] = {{"path", rt.cfg.source.string()}, {"sha256", rt.cfg.digest}};
    j_["backend"] = rt.backend_kind;
    if (!rt.mock_digest.empty()) j_["mock_script_sha256"] = rt.mock_digest;
  }

  ojson& operator[](const std::string& key) { return j_[key]; }

  void artifact(const std::string& name, const fs::path& path) {
    j_["artifacts"][name] = {{"path", path.string()},
                             {"sha256", io::sha256_hex(io::read_file(path))}};
  }

  void write(const fs::path& path, const Gateway* gateway) {
    if (gateway) j_["gateway"] = stats_json(gateway->stats());
    io::write_file_atomic(path, j_.dump(2) + "\n");
  }

 private:
  ojson j_;
};

fs::path pick(const std::string& flag, const std::optional<fs::path>& fallback,
              const std::string& name) {
  if (!flag.empty()) return flag;
  if (fallback) return *fallback;
  fail(Errc::kConfig, "no " + name + " dataset: pass --" + name + " or set data." + name);
}

std::string jsonl(const std::vector<ojson>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

// ---------------------------------------------------------------- optimize

struct OptimizeArgs {
  std::string config, mock, train, val, out, resume, snapshot, trajectory, manifest;
};

int cmd_optimize(const OptimizeArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  Runtime rt(a.config, a.mock);
  const auto train = load_dataset(pick(a.train, rt.cfg.data.train, "train"), rt.labels);
  const auto val = load_dataset(pick(a.val, rt.cfg.data.val, "val"), rt.labels);
  const fs::path out_path(a.out);
  const fs::path snapshot = a.snapshot.empty() ? fs::path(a.out + ".state.json") : fs::path(a.snapshot);
  const fs::path traj_path =
      a.trajectory.empty() ? fs::path(a.out + ".trajectory.jsonl") : fs::path(a.trajectory);
  const fs::path manifest_path =
      a.manifest.empty() ? fs::path(a.out + ".manifest.json") : fs::path(a.manifest);

  std::optional<OptimizerState> resume;
  if (!a.resume.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(io::read_file(a.resume));
    } catch (const nlohmann::json::parse_error& e) {
      fail(Errc::kInvalidInput, a.resume + ": " + e.what());
    }
    resume = state_from_json(j, rt.labels);
    spdlog::info("resuming from iteration {}", resume->iteration);
  }

  const OptimizerContext ctx{rt.labels, rt.cfg.task, *rt.gateway, rt.cfg.optimizer};
  std::vector<ojson> trajectory;
  auto record_initial = [&](const OptimizerState& s) {
    for (const auto& p : s.trajectory) {
      trajectory.push_back(ojson{{"iteration", p.iteration}, {"objective", p.objective}});
    }
  };
  if (!resume) resume = initial_state(rt.cfg.optimizer, val, rt.labels);
  record_initial(*resume);
  io::write_file_atomic(traj_path, jsonl(trajectory));

  auto on_iteration = [&](const OptimizerState& s, const IterationReport& report) {
    io::write_file_atomic(snapshot, state_to_json(s).dump() + "\n");
    ojson row = report.to_json();
    row["objective"] = s.active.score;
    row["pool_size"] = s.pool.size();
    row["gateway"] = stats_json(rt.gateway->stats());
    trajectory.push_back(std::move(row));
    io::write_file_atomic(traj_path, jsonl(trajectory));
  };
  auto result = run(ctx, train, val, std::move(resume), on_iteration);
  if (result.reports.empty()) io::write_file_atomic(snapshot, state_to_json(result.state).dump() + "\n");

  const auto rules = active_rules(result.state);
  save_sop(out_path, rules);
  log_stats(rt.gateway->stats());

  Manifest m("optimize", args);
  m.runtime(rt);
  m["seed"] = rt.cfg.optimizer.seed;
  m["iterations"] = result.state.iteration;
  m["objective"] = result.state.active.score;
  m["pool_size"] = result.state.pool.size();
  m["classifier_parse_failures"] = result.state.classifier_parse_failures;
  m.artifact("sop", out_path);
  m.artifact("snapshot", snapshot);
  m.artifact("trajectory", traj_path);
  m.write(manifest_path, rt.gateway.get());

  out << "iterations: " << result.state.iteration << "\n"
      << "active rules: " << rules.size() << " of " << result.state.pool.size() << "\n"
      << "val objective: " << std::fixed << std::setprecision(4) << result.state.active.score
      << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- distill

struct DistillArgs {
  std::string config, mock, data, sop, out;
  bool no_export = false;
};

int cmd_distill(const DistillArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  Runtime rt(a.config, a.mock);
  auto examples = load_dataset(pick(a.data, rt.cfg.data.train, "data"), rt.labels);
  const auto sop = load_sop(a.sop, rt.labels);
  require(!sop.empty(), "SOP file " + a.sop + " holds no rules");
  const std::string sop_text = format_rulebook(sop, rt.labels);
  const fs::path dir(a.out);
  fs::create_directories(dir);

  const auto outcomes = sample_all_teacher_traces(*rt.gateway, rt.labels, rt.cfg.task, examples,
                                                  sop_text, rt.cfg.distill.sampling);
  const auto set = build_distillation_set(examples, outcomes);

  Manifest m("distill", args);
  m.runtime(rt);
  m["seed"] = rt.cfg.distill.seed;
  m["examples"] = examples.size();
  m["easy"] = set.easy_ids.size();
  m["hard"] = set.hard_ids.size();

  write_teacher_log(outcomes, rt.labels, dir / "teacher_log.jsonl");
  write_difficulty_manifest(outcomes, dir / "difficulty.jsonl");
  save_dataset(dir / "tagged.jsonl", examples, rt.labels);
  m.artifact("teacher_log", dir / "teacher_log.jsonl");
  m.artifact("difficulty", dir / "difficulty.jsonl");
  m.artifact("tagged", dir / "tagged.jsonl");

  if (!a.no_export) {
    Rng rng(rt.cfg.distill.seed);
    const auto epoch = balance_upsample(set, rt.labels, rng);
    export_rsft(epoch, rt.labels, rt.cfg.task, dir / "rsft.jsonl");
    m["epoch_records"] = epoch.size();
    m.artifact("rsft", dir / "rsft.jsonl");
  }
  log_stats(rt.gateway->stats());
  m.write(dir / "manifest.json", rt.gateway.get());

  out << "easy: " << set.easy_ids.size() << "\nhard: " << set.hard_ids.size() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- batch

struct BatchArgs {
  std::string config, mock, pool, data, out, synthetic;
  std::size_t steps = 0;
  std::size_t start_step = 0;
};

std::map<std::string, Difficulty> read_difficulty(const fs::path& path) {
  std::map<std::string, Difficulty> out;
  const std::string content = io::read_file(path);
  std::size_t line_no = 0;
  for (auto line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("example_id").get<std::string>()] =
          parse_difficulty(j.at("difficulty").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::kInvalidInput, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

int cmd_batch(const BatchArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  Runtime rt(a.config, a.mock);
  const auto difficulty = read_difficulty(a.pool);
  auto examples = load_dataset(pick(a.data, rt.cfg.data.train, "data"), rt.labels);
  std::vector<std::vector<Example>> pools(rt.labels.size());
  std::size_t hard_in_pool = 0, pool_size = 0;
  for (auto& ex : examples) {
    auto it = difficulty.find(ex.id);
    if (it == difficulty.end()) continue;
    ex.difficulty = it->second;
    hard_in_pool += it->second == Difficulty::kHard;
    ++pool_size;
    pools[ex.gold].push_back(ex);
  }
  require(pool_size > 0, "no dataset example appears in the pool manifest");

  std::unique_ptr<RolloutProvider> provider;
  if (!a.synthetic.empty()) {
    const auto comma = a.synthetic.find(',');
    require(comma != std::string::npos, "--synthetic expects P_HARD,P_EASY");
    const double p_hard = std::stod(a.synthetic.substr(0, comma));
    const double p_easy = std::stod(a.synthetic.substr(comma + 1));
    require(p_hard >= 0 && p_hard <= 1 && p_easy >= 0 && p_easy <= 1,
            "--synthetic probabilities must lie in [0, 1]");
    provider = std::make_unique<SyntheticRolloutProvider>(
        rt.labels,
        [=](const Example& ex) { return ex.difficulty == Difficulty::kHard ? p_hard : p_easy; },
        rt.cfg.batcher.seed);
  } else {
    provider = std::make_unique<GatewayRolloutProvider>(
        *rt.gateway, rt.labels, rt.cfg.task, rt.cfg.batcher.model, rt.cfg.batcher.temperature,
        rt.cfg.gateway.max_in_flight);
  }
  std::unique_ptr<AuxScorer> aux;
  if (rt.cfg.batcher.aux_enabled) {
    aux = std::make_unique<JudgeAuxScorer>(*rt.gateway, rt.cfg.task, rt.labels,
                                           rt.cfg.batcher.aux_model,
                                           rt.cfg.batcher.aux_top_logprobs,
                                           rt.cfg.gateway.max_in_flight);
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const std::size_t steps = a.steps > 0 ? a.steps : rt.cfg.batcher.steps;
  Rng rng(derive_seed(rt.cfg.batcher.seed, "batch:" + std::to_string(a.start_step)));
  std::vector<ojson> log;
  Manifest m("batch", args);
  m.runtime(rt);
  m["seed"] = rt.cfg.batcher.seed;
  m["pool_size"] = pool_size;
  m["pool_hard"] = hard_in_pool;
  for (std::size_t s = a.start_step; s < a.start_step + steps; ++s) {
    const auto batch = build_batch(pools, *provider, rt.labels, rt.cfg.task, rt.cfg.batcher.options,
                                   s, rng, aux.get());
    std::ostringstream name;
    name << "batch_" << std::setw(6) << std::setfill('0') << s << ".jsonl";
    export_batch(batch, rt.labels, dir / name.str());
    m.artifact(name.str(), dir / name.str());

    std::size_t informative = 0, informative_hard = 0;
    for (const auto& g : batch.groups) {
      if (!g.informative) continue;
      ++informative;
      informative_hard += difficulty.at(g.example_id) == Difficulty::kHard;
    }
    ojson row{{"step", s},
              {"quota", batch.quota.counts},
              {"candidates_drawn", batch.candidates_drawn},
              {"filtered", batch.filtered},
              {"topped_up", batch.topped_up},
              {"informative", informative},
              {"informative_hard", informative_hard}};
    log.push_back(row);
    spdlog::info("step {}: {} groups, {} filtered, {} topped up", s, batch.groups.size(),
                 batch.filtered, batch.topped_up);
  }
  io::write_file_atomic(dir / "batches.log.jsonl", jsonl(log));
  m.artifact("log", dir / "batches.log.jsonl");
  if (a.synthetic.empty()) log_stats(rt.gateway->stats());
  m.write(dir / "manifest.json", rt.gateway.get());
  out << "batches: " << steps << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ revise

struct ReviseArgs {
  std::string config, mock, sop, hard, teacher_log, data, val, val_hard, out, report;
  std::vector<std::string> rollouts;
};

std::vector<fs::path> rollout_files(const std::vector<std::string>& specs) {
  std::vector<fs::path> out;
  for (const auto& s : specs) {
    const fs::path p(s);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto name = e.path().filename().string();
        if (name.starts_with("batch_") && name.ends_with(".jsonl")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

int cmd_revise(const ReviseArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  Runtime rt(a.config, a.mock);
  const auto sop = load_sop(a.sop, rt.labels);
  const auto examples = load_dataset(pick(a.data, rt.cfg.data.train, "data"), rt.labels);
  const auto val = load_dataset(pick(a.val, rt.cfg.data.val, "val"), rt.labels);

  std::set<std::string> hard_ids;
  for (const auto& [id, d] : read_difficulty(a.hard)) {
    if (d == Difficulty::kHard) hard_ids.insert(id);
  }
  std::set<std::string> val_hard_ids;
  for (const auto& [id, d] : read_difficulty(a.val_hard)) {
    if (d == Difficulty::kHard) val_hard_ids.insert(id);
  }
  std::vector<Example> val_hard;
  for (const auto& ex : val) {
    if (val_hard_ids.contains(ex.id)) val_hard.push_back(ex);
  }
  require(!val_hard.empty(), "no val example is marked hard in " + a.val_hard);

  std::vector<RolloutGroup> logs;
  for (const auto& f : rollout_files(a.rollouts)) {
    auto groups = read_batch(f, rt.labels);
    logs.insert(logs.end(), std::make_move_iterator(groups.begin()),
                std::make_move_iterator(groups.end()));
  }
  const auto teacher = read_teacher_log(a.teacher_log, rt.labels);

  FiringTable table;
  const ReviseContext ctx{rt.labels, rt.cfg.task, *rt.gateway, rt.cfg.revise};
  const auto result = run_revision(ctx, sop, logs, hard_ids, teacher, examples, val_hard, table);
  save_sop(a.out, result.sop);

  ojson report;
  report["pairs"] = result.pairs.size();
  auto strategies = ojson::array();
  for (const auto& s : result.taxonomy.strategies) {
    strategies.push_back({{"id", s.id}, {"label", s.label}, {"analysis", s.analysis}});
  }
  report["strategies"] = std::move(strategies);
  auto ids_of = [](const std::vector<Rule>& rules) {
    std::vector<std::string> ids;
    for (const auto& r : rules) ids.push_back(r.id());
    return ids;
  };
  report["candidates"] = ids_of(result.candidates);
  report["deduped"] = ids_of(result.deduped);
  report["additions"] = result.selection.addition_ids;
  report["val_hard_size"] = val_hard.size();
  report["val_hard_baseline"] = result.selection.baseline;
  report["val_hard_objective"] = result.selection.score;
  const fs::path report_path = a.report.empty() ? fs::path(a.out + ".report.json") : fs::path(a.report);
  io::write_file_atomic(report_path, report.dump(2) + "\n");

  log_stats(rt.gateway->stats());
  Manifest m("revise", args);
  m.runtime(rt);
  m["seed"] = rt.cfg.revise.seed;
  m.artifact("sop", a.out);
  m.artifact("report", report_path);
  m.write(a.out + ".manifest.json", rt.gateway.get());

  out << "candidates: " << result.candidates.size() << " (" << result.deduped.size()
      << " after dedup)\nadded: " << result.selection.addition_ids.size() << "\n"
      << "val_hard objective: " << std::fixed << std::setprecision(4) << result.selection.baseline
      << " -> " << result.selection.score << "\n";
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string config, mock, preds, gold, sop, data, out;
};

std::vector<std::pair<std::string, std::optional<std::string>>> read_labels(const fs::path& path) {
  std::vector<std::pair<std::string, std::optional<std::string>>> out;
  const std::string content = io::read_file(path);
  std::size_t line_no = 0;
  for (auto line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      std::optional<std::string> label;
      if (j.contains("label") && !j.at("label").is_null()) {
        const auto& l = j.at("label");
        label = l.is_string() ? l.get<std::string>() : l.dump();
      }
      out.emplace_back(j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump(),
                       std::move(label));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::kInvalidInput, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void print_metrics(std::ostream& out, std::span<const Prediction> preds,
                   std::span<const LabelId> golds, const LabelSpace& labels) {
  const auto counts = tally(preds, golds, labels.size());
  out << "examples: " << golds.size() << "\n"
      << "macro-F1: " << std::fixed << std::setprecision(4) << macro_f1(counts) << "\n"
      << "balanced accuracy: " << balanced_accuracy(counts) << "\n";
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!a.sop.empty()) {
    require(!a.config.empty(), "eval --sop needs --config");
    Runtime rt(a.config, a.mock);
    const auto rules = load_sop(a.sop, rt.labels);
    const auto data = load_dataset(pick(a.data, rt.cfg.data.test, "data"), rt.labels);
    FiringTable table;
    const OptimizerContext ctx{rt.labels, rt.cfg.task, *rt.gateway, rt.cfg.optimizer};
    parallel_for(data.size() * rules.size(), rt.cfg.gateway.max_in_flight, [&](std::size_t k) {
      classify_rule(ctx, data[k / rules.size()], rules[k % rules.size()], table);
    });
    std::vector<std::string> ids;
    for (const auto& r : rules) ids.push_back(r.id());
    const auto eval = evaluate_subset(ids, rules, table, data, rt.labels);
    std::vector<Prediction> preds(eval.predictions.begin(), eval.predictions.end());
    std::vector<LabelId> golds;
    std::vector<ojson> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      golds.push_back(data[i].gold);
      rows.push_back(ojson{{"id", data[i].id}, {"label", rt.labels.name(eval.predictions[i])}});
    }
    if (!a.out.empty()) io::write_file_atomic(a.out, jsonl(rows));
    print_metrics(out, preds, golds, rt.labels);
    return kExitOk;
  }

  require(!a.preds.empty() && !a.gold.empty(), "eval needs --preds and --gold, or --sop");
  const auto gold_rows = read_labels(a.gold);
  const auto pred_rows = read_labels(a.preds);
  std::optional<LabelSpace> labels;
  if (!a.config.empty()) {
    labels = load_config(a.config).labels();
  } else {
    std::set<std::string> names;
    for (const auto& [id, l] : gold_rows) {
      require(l.has_value(), "gold row " + id + " has no label");
      names.insert(*l);
    }
    require(!names.empty(), "gold file is empty");
    labels = LabelSpace::ordered_by_priority({names.begin(), names.end()});
  }
  std::map<std::string, std::optional<std::string>> by_id;
  for (const auto& [id, l] : pred_rows) by_id[id] = l;

  std::vector<Prediction> preds;
  std::vector<LabelId> golds;
  std::size_t missing = 0;
  for (const auto& [id, l] : gold_rows) {
    require(l.has_value(), "gold row " + id + " has no label");
    const auto g = labels->resolve(*l);
    require(g.has_value(), "gold row " + id + " has unknown label '" + *l + "'");
    golds.push_back(*g);
    auto it = by_id.find(id);
    if (it == by_id.end()) ++missing;
    // Missing, null and unknown predictions are counted wrong for the gold class.
    preds.push_back(it != by_id.end() && it->second ? labels->resolve(*it->second)
                                                    : std::nullopt);
  }
  if (missing > 0) spdlog::warn("{} gold examples have no prediction", missing);
  print_metrics(out, preds, golds, *labels);
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("extc", sink);
  logger->set_pattern("[%H:%M:%S] [%l] %v");
  auto previous = spdlog::default_logger();
  spdlog::set_default_logger(logger);
  struct Restore {
    std::shared_ptr<spdlog::logger> logger;
    ~Restore() { spdlog::set_default_logger(logger); }
  } restore{previous};

  CLI::App app{"Rulebook-grounded text classification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto with_common = [](CLI::App* sub, std::string& config, std::string& mock, bool config_required) {
    auto* opt = sub->add_option("--config", config, "run configuration (JSON)")->check(CLI::ExistingFile);
    if (config_required) opt->required();
    sub->add_option("--mock", mock, "scripted mock backend instead of HTTP")->check(CLI::ExistingFile);
  };

  OptimizeArgs oa;
  auto* optimize = app.add_subcommand("optimize", "learn a rulebook from train/val data");
  with_common(optimize, oa.config, oa.mock, true);
  optimize->add_option("--train", oa.train, "training examples (JSONL)")->check(CLI::ExistingFile);
  optimize->add_option("--val", oa.val, "validation examples (JSONL)")->check(CLI::ExistingFile);
  optimize->add_option("--out", oa.out, "rulebook output path")->required();
  optimize->add_option("--resume", oa.resume, "optimizer snapshot to continue")->check(CLI::ExistingFile);
  optimize->add_option("--snapshot", oa.snapshot, "snapshot path (default <out>.state.json)");
  optimize->add_option("--trajectory-log", oa.trajectory, "per-iteration log (default <out>.trajectory.jsonl)");
  optimize->add_option("--manifest", oa.manifest, "run manifest (default <out>.manifest.json)");

  DistillArgs da;
  auto* distill = app.add_subcommand("distill", "sample teacher traces and export R-SFT data");
  with_common(distill, da.config, da.mock, true);
  distill->add_option("--data", da.data, "examples to process (JSONL)")->check(CLI::ExistingFile);
  distill->add_option("--sop", da.sop, "rulebook")->required()->check(CLI::ExistingFile);
  distill->add_option("--out", da.out, "output directory")->required();
  distill->add_flag("--no-export", da.no_export, "only partition hard/easy, skip the R-SFT file");

  BatchArgs ba;
  auto* batch = app.add_subcommand("batch", "build class-balanced RL batches");
  with_common(batch, ba.config, ba.mock, true);
  batch->add_option("--pool", ba.pool, "difficulty manifest naming the pool")->required()->check(CLI::ExistingFile);
  batch->add_option("--data", ba.data, "examples (JSONL)")->check(CLI::ExistingFile);
  batch->add_option("--steps", ba.steps, "number of batches");
  batch->add_option("--start-step", ba.start_step, "index of the first batch");
  batch->add_option("--out", ba.out, "output directory")->required();
  batch->add_option("--synthetic", ba.synthetic, "synthetic rollouts: P_HARD,P_EASY correctness");

  ReviseArgs ra;
  auto* revise = app.add_subcommand("revise", "mine rules from RL rollouts on hard inputs");
  with_common(revise, ra.config, ra.mock, true);
  revise->add_option("--sop", ra.sop, "existing rulebook")->required()->check(CLI::ExistingFile);
  revise->add_option("--rollouts", ra.rollouts, "batch export file or directory (repeatable)")
      ->required()->check(CLI::ExistingPath);
  revise->add_option("--hard", ra.hard, "training difficulty manifest")->required()->check(CLI::ExistingFile);
  revise->add_option("--teacher-log", ra.teacher_log, "teacher audit log from distill")
      ->required()->check(CLI::ExistingFile);
  revise->add_option("--data", ra.data, "training examples (JSONL)")->check(CLI::ExistingFile);
  revise->add_option("--val", ra.val, "validation examples (JSONL)")->check(CLI::ExistingFile);
  revise->add_option("--val-hard", ra.val_hard, "validation difficulty manifest")
      ->required()->check(CLI::ExistingFile);
  revise->add_option("--out", ra.out, "revised rulebook output path")->required();
  revise->add_option("--report", ra.report, "report path (default <out>.report.json)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score predictions, or a rulebook on a dataset");
  with_common(eval, ea.config, ea.mock, false);
  eval->add_option("--preds", ea.preds, "predictions (JSONL with id, label)")->check(CLI::ExistingFile);
  eval->add_option("--gold", ea.gold, "gold labels (JSONL with id, label)")->check(CLI::ExistingFile);
  eval->add_option("--sop", ea.sop, "rulebook to apply")->check(CLI::ExistingFile);
  eval->add_option("--data", ea.data, "dataset for --sop")->check(CLI::ExistingFile);
  eval->add_option("--out", ea.out, "write --sop predictions here");

  std::vector<std::string> argv_store{"extc"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  logger->set_level(spdlog::level::from_str(log_level));

  try {
    if (optimize->parsed()) return cmd_optimize(oa, args, out);
    if (distill->parsed()) return cmd_distill(da, args, out);
    if (batch->parsed()) return cmd_batch(ba, args, out);
    if (revise->parsed()) return cmd_revise(ra, args, out);
    if (eval->parsed()) return cmd_eval(ea, out);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_status(e.code());
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return kExitUnexpected;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace extc::cli
