#include "extc/grpo/batcher.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "extc/common/error.hpp"
#include "extc/common/io.hpp"
#include "extc/common/parallel.hpp"
#include "extc/common/text.hpp"

namespace extc {

namespace {

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments population_moments(std::span<const double> xs) {
  Moments m;
  if (xs.empty()) return m;
  const double n = static_cast<double>(xs.size());
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / n);
  return m;
}

}  // namespace

std::size_t ClassQuota::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

double correctness_reward(const std::optional<LabelId>& predicted, LabelId gold) {
  return predicted && *predicted == gold ? 1.0 : -1.0;
}

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon) {
  require(rewards.size() >= 2, "a rollout group needs at least two rewards");
  require(epsilon > 0.0, "epsilon must be positive");
  const Moments m = population_moments(rewards);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back(m.std == 0.0 ? 0.0 : (r - m.mean) / (m.std + epsilon));
  return out;
}

std::vector<double> combined_advantages(std::span<const double> rewards,
                                        std::span<const std::optional<double>> aux_scores,
                                        double lambda_aux, double epsilon) {
  require(lambda_aux >= 0.0, "lambda_aux must be >= 0");
  require(aux_scores.empty() || aux_scores.size() == rewards.size(),
          "aux scores must align with rewards");
  auto out = group_advantages(rewards, epsilon);
  if (aux_scores.empty() || lambda_aux == 0.0) return out;

  std::vector<double> scored;
  for (const auto& s : aux_scores) {
    if (s) scored.push_back(*s);
  }
  if (scored.empty()) return out;
  const Moments m = population_moments(scored);
  if (m.std == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (aux_scores[i]) out[i] += lambda_aux * (*aux_scores[i] - m.mean) / (m.std + epsilon);
  }
  return out;
}

ClassQuota class_quotas(std::size_t B, const LabelSpace& labels, std::size_t step) {
  const std::size_t C = labels.size();
  require(C >= 1, "empty label space");
  require(B >= C, "batch size " + std::to_string(B) + " is smaller than the class count " +
                      std::to_string(C));
  ClassQuota q;
  q.step = step;
  q.counts.assign(C, B / C);
  const std::size_t r = B % C;
  for (std::size_t i = 0; i < r; ++i) ++q.counts[(step + i) % C];
  return q;
}

GatewayRolloutProvider::GatewayRolloutProvider(Gateway& gateway, const LabelSpace& labels,
                                               const TaskProfile& task, std::string model,
                                               double temperature, std::size_t max_in_flight)
    : gateway_(gateway),
      labels_(labels),
      task_(task),
      model_(std::move(model)),
      temperature_(temperature),
      max_in_flight_(max_in_flight) {}

std::vector<std::string> GatewayRolloutProvider::generate(const Example& example,
                                                          std::span<const std::string> seed_tags) {
  Bindings b = task_.base_bindings(labels_);
  b["text"] = example.text;
  const Prompt prompt = render(tmpl::kReasoningWithoutRules, b);
  std::vector<std::string> out(seed_tags.size());
  parallel_for(seed_tags.size(), max_in_flight_, [&](std::size_t i) {
    out[i] = gateway_.complete(prompt, model_, temperature_, std::nullopt, seed_tags[i]).content;
  });
  return out;
}

SyntheticRolloutProvider::SyntheticRolloutProvider(const LabelSpace& labels,
                                                   CorrectnessFn p_correct, std::uint64_t seed,
                                                   double p_parse_failure)
    : labels_(labels),
      p_correct_(std::move(p_correct)),
      seed_(seed),
      p_parse_failure_(p_parse_failure) {
  require(labels.size() >= 2, "synthetic rollouts need at least two labels");
}

std::vector<std::string> SyntheticRolloutProvider::generate(
    const Example& example, std::span<const std::string> seed_tags) {
  const double p = p_correct_(example);
  std::vector<std::string> out;
  out.reserve(seed_tags.size());
  for (const auto& tag : seed_tags) {
    Rng rng(derive_seed(seed_, example.id + '\x1f' + tag));
    if (p_parse_failure_ > 0.0 && uniform_unit(rng) < p_parse_failure_) {
      out.push_back("I cannot decide.");
      continue;
    }
    LabelId label = example.gold;
    if (!(uniform_unit(rng) < p)) {
      label = uniform_index(rng, labels_.size() - 1);
      if (label >= example.gold) ++label;
    }
    out.push_back(format_reasoning_label("Synthetic rollout " + tag + ".", labels_.name(label)));
  }
  return out;
}

JudgeAuxScorer::JudgeAuxScorer(Gateway& gateway, const TaskProfile& task, const LabelSpace& labels,
                               std::string model, int top_logprobs, std::size_t max_in_flight)
    : gateway_(gateway),
      task_(task),
      labels_(labels),
      model_(std::move(model)),
      top_logprobs_(top_logprobs),
      max_in_flight_(max_in_flight) {}

std::vector<std::optional<double>> JudgeAuxScorer::score(const Example& example,
                                                         std::span<const Rollout> rollouts) {
  std::vector<std::optional<double>> out(rollouts.size());
  if (text::trim(example.text).empty()) return out;
  const Bindings base = task_.base_bindings(labels_);
  parallel_for(rollouts.size(), max_in_flight_, [&](std::size_t i) {
    const auto& r = rollouts[i];
    if (!r.parsed || text::trim(r.parsed->reasoning).empty()) return;
    Bindings b = base;
    b["source"] = example.text;
    b["reasoning"] = r.parsed->reasoning;
    const auto response = gateway_.complete(render(tmpl::kFaithfulnessJudge, b), model_, 0.0,
                                            top_logprobs_);
    try {
      out[i] = judge_expected_score(response);
    } catch (const Error& e) {
      if (e.code() != Errc::kUnscoreable) throw;
      spdlog::warn("faithfulness judge output for {} unscoreable", example.id);
    }
  });
  return out;
}

double groundedness_score(Gateway& gateway, const TaskProfile& task, const LabelSpace& labels,
                          const std::string& evidence, const std::string& reasoning,
                          const std::string& model, int top_logprobs) {
  Bindings b = task.base_bindings(labels);
  b["source"] = evidence;
  b["reasoning"] = reasoning;
  return judge_expected_score(
      gateway.complete(render(tmpl::kGroundednessJudge, b), model, 0.0, top_logprobs));
}

std::string rollout_prompt(const Example& example, const LabelSpace& labels,
                           const TaskProfile& task) {
  Bindings b = task.base_bindings(labels);
  b["text"] = example.text;
  return render(tmpl::kReasoningWithoutRules, b).messages.back().content;
}

RolloutGroup make_group(const Example& example, std::vector<std::string> texts,
                        const LabelSpace& labels, std::string prompt) {
  RolloutGroup g;
  g.example_id = example.id;
  g.gold = example.gold;
  g.prompt = std::move(prompt);
  bool any_pos = false, any_neg = false;
  for (auto& t : texts) {
    Rollout r;
    r.text = std::move(t);
    auto parsed = parse_reasoning_label(r.text, labels);
    if (ok(parsed)) r.parsed = std::get<ReasonedLabel>(std::move(parsed));
    r.reward = correctness_reward(r.parsed ? std::optional<LabelId>(r.parsed->label) : std::nullopt,
                                  example.gold);
    (r.reward > 0 ? any_pos : any_neg) = true;
    g.rollouts.push_back(std::move(r));
  }
  g.informative = any_pos && any_neg;
  return g;
}

TrainingBatch build_batch(std::span<const std::vector<Example>> class_pools,
                          RolloutProvider& provider, const LabelSpace& labels,
                          const TaskProfile& task, const BatchOptions& options, std::size_t step,
                          Rng& rng, AuxScorer* aux) {
  require(options.G >= 2, "G must be >= 2");
  require(options.kappa >= 1, "kappa must be >= 1");
  require(class_pools.size() == labels.size(), "one example pool per class is required");
  for (LabelId c = 0; c < labels.size(); ++c) {
    if (class_pools[c].empty()) {
      fail(Errc::kUnbatchable, "class '" + labels.name(c) + "' has no examples to draw");
    }
  }

  TrainingBatch batch;
  batch.step = step;
  batch.quota = class_quotas(options.B, labels, step);

  auto tags_for = [&](std::size_t draw) {
    std::vector<std::string> tags;
    for (std::size_t g = 0; g < options.G; ++g) {
      tags.push_back("rollout:" + std::to_string(step) + ":" + std::to_string(draw) + ":" +
                     std::to_string(g));
    }
    return tags;
  };

  std::size_t draw_counter = 0;
  for (LabelId c = 0; c < labels.size(); ++c) {
    const auto& pool = class_pools[c];
    const std::size_t quota = batch.quota.counts[c];
    if (quota == 0) continue;

    // Oversample: draw order is fixed before any rollout runs.
    const std::size_t want = std::min(options.kappa * quota, pool.size());
    auto order = sample_without_replacement(rng, pool.size(), pool.size());
    std::vector<std::size_t> drawn(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want));
    std::vector<std::size_t> spare(order.begin() + static_cast<std::ptrdiff_t>(want), order.end());

    std::vector<RolloutGroup> groups(drawn.size());
    const std::size_t base_draw = draw_counter;
    draw_counter += drawn.size();
    parallel_for(drawn.size(), options.max_in_flight, [&](std::size_t k) {
      const Example& ex = pool[drawn[k]];
      groups[k] = make_group(ex, provider.generate(ex, tags_for(base_draw + k)), labels,
                             rollout_prompt(ex, labels, task));
    });
    batch.candidates_drawn += drawn.size();

    std::vector<RolloutGroup> kept;
    for (auto& g : groups) {
      if (g.informative && kept.size() < quota) {
        kept.push_back(std::move(g));
      } else if (!g.informative) {
        ++batch.filtered;
      }
    }

    // Top-up: fresh draws first, then with replacement once the pool is spent.
    std::size_t next_spare = 0;
    while (kept.size() < quota) {
      const std::size_t idx =
          next_spare < spare.size() ? spare[next_spare++] : uniform_index(rng, pool.size());
      const Example& ex = pool[idx];
      auto g = make_group(ex, provider.generate(ex, tags_for(draw_counter++)), labels,
                          rollout_prompt(ex, labels, task));
      g.topped_up = true;
      ++batch.topped_up;
      kept.push_back(std::move(g));
    }

    for (auto& g : kept) batch.groups.push_back(std::move(g));
  }

  // Advantages. Only informative groups are judged; others keep zero aux.
  std::map<std::string, const Example*> examples;
  for (const auto& pool : class_pools) {
    for (const auto& ex : pool) examples.emplace(ex.id, &ex);
  }
  for (auto& g : batch.groups) {
    std::vector<double> rewards;
    for (const auto& r : g.rollouts) rewards.push_back(r.reward);
    std::vector<std::optional<double>> aux_scores;
    if (aux && g.informative) {
      aux_scores = aux->score(*examples.at(g.example_id), g.rollouts);
      for (std::size_t i = 0; i < g.rollouts.size(); ++i) g.rollouts[i].aux_score = aux_scores[i];
    }
    const auto adv = combined_advantages(rewards, aux_scores, options.lambda_aux, options.epsilon);
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) g.rollouts[i].advantage = adv[i];
  }
  return batch;
}

std::string serialize_batch(const TrainingBatch& batch, const LabelSpace& labels) {
  std::string out;
  for (const auto& g : batch.groups) {
    nlohmann::ordered_json j;
    j["example_id"] = g.example_id;
    j["gold"] = labels.name(g.gold);
    j["prompt"] = g.prompt;
    auto rollouts = nlohmann::ordered_json::array();
    for (const auto& r : g.rollouts) {
      nlohmann::ordered_json e{{"text", r.text}, {"reward", r.reward}, {"advantage", r.advantage}};
      if (r.aux_score) e["aux_score"] = *r.aux_score;
      rollouts.push_back(std::move(e));
    }
    j["rollouts"] = std::move(rollouts);
    j["informative"] = g.informative;
    j["topped_up"] = g.topped_up;
    out += j.dump() + "\n";
  }
  return out;
}

void export_batch(const TrainingBatch& batch, const LabelSpace& labels,
                  const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_batch(batch, labels));
}

std::vector<RolloutGroup> parse_batch(std::string_view content, const LabelSpace& labels) {
  std::vector<RolloutGroup> out;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RolloutGroup g;
      g.example_id = j.at("example_id").get<std::string>();
      g.gold = labels.id(j.at("gold").get<std::string>());
      g.prompt = j.value("prompt", std::string());
      for (const auto& e : j.at("rollouts")) {
        Rollout r;
        r.text = e.at("text").get<std::string>();
        auto parsed = parse_reasoning_label(r.text, labels);
        if (ok(parsed)) r.parsed = std::get<ReasonedLabel>(std::move(parsed));
        r.reward = e.at("reward").get<double>();
        r.advantage = e.at("advantage").get<double>();
        if (e.contains("aux_score")) r.aux_score = e.at("aux_score").get<double>();
        g.rollouts.push_back(std::move(r));
      }
      g.informative = j.at("informative").get<bool>();
      g.topped_up = j.at("topped_up").get<bool>();
      out.push_back(std::move(g));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::kInvalidInput, "batch line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RolloutGroup> read_batch(const std::filesystem::path& path, const LabelSpace& labels) {
  return parse_batch(io::read_file(path), labels);
}

}  // namespace extc
