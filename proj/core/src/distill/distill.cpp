#include "extc/distill/distill.hpp"

#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "extc/common/error.hpp"
#include "extc/common/io.hpp"
#include "extc/common/parallel.hpp"
#include "extc/common/text.hpp"

namespace extc {

const TeacherTrace& TeacherOutcome::accepted_trace() const {
  require(accepted(), "example " + example_id + " has no accepted trace");
  return attempts.back();
}

std::string teacher_seed_tag(const std::string& example_id, std::size_t attempt_index) {
  return "teacher:" + example_id + ":" + std::to_string(attempt_index);
}

TeacherOutcome sample_teacher_traces(Gateway& gateway, const LabelSpace& labels,
                                     const TaskProfile& task, const Example& example,
                                     const std::string& sop_text, const TeacherSampling& sampling) {
  require(sampling.M >= 1, "M must be >= 1");
  require(!text::trim(sop_text).empty(), "SOP text is empty");

  Bindings b = task.base_bindings(labels);
  b["rulebook"] = sop_text;
  b["text"] = example.text;
  const Prompt prompt = render(tmpl::kReasoningWithRules, b);

  TeacherOutcome out;
  out.example_id = example.id;
  for (std::size_t k = 1; k <= sampling.M; ++k) {
    TeacherTrace trace;
    trace.example_id = example.id;
    trace.attempt_index = k;
    trace.seed_tag = teacher_seed_tag(example.id, k);
    trace.raw = gateway.complete(prompt, sampling.model, sampling.temperature, std::nullopt,
                                 trace.seed_tag)
                    .content;
    auto parsed = parse_reasoning_label(trace.raw, labels);
    if (ok(parsed)) {
      auto& rl = std::get<ReasonedLabel>(parsed);
      trace.reasoning = std::move(rl.reasoning);
      trace.predicted = rl.label;
      trace.accepted = rl.label == example.gold;
    }
    const bool done = trace.accepted;
    out.attempts.push_back(std::move(trace));
    if (done) break;
  }
  return out;
}

std::vector<TeacherOutcome> sample_all_teacher_traces(Gateway& gateway, const LabelSpace& labels,
                                                      const TaskProfile& task,
                                                      std::span<const Example> examples,
                                                      const std::string& sop_text,
                                                      const TeacherSampling& sampling) {
  std::vector<TeacherOutcome> out(examples.size());
  parallel_for(examples.size(), sampling.max_in_flight, [&](std::size_t i) {
    out[i] = sample_teacher_traces(gateway, labels, task, examples[i], sop_text, sampling);
  });
  return out;
}

DistillationSet build_distillation_set(std::span<Example> examples,
                                       std::span<const TeacherOutcome> outcomes) {
  std::map<std::string, const TeacherOutcome*> by_id;
  for (const auto& o : outcomes) {
    require(by_id.emplace(o.example_id, &o).second, "duplicate outcome for " + o.example_id);
  }
  DistillationSet set;
  for (auto& ex : examples) {
    auto it = by_id.find(ex.id);
    require(it != by_id.end(), "example " + ex.id + " was not processed by the teacher");
    const TeacherOutcome& o = *it->second;
    if (o.accepted()) {
      const auto& t = o.accepted_trace();
      require(t.predicted == ex.gold, "accepted trace for " + ex.id + " disagrees with gold");
      set.accepted.push_back({ex.id, ex.text, ex.gold, t.reasoning, t.attempt_index});
      set.easy_ids.push_back(ex.id);
      ex.difficulty = Difficulty::kEasy;
    } else {
      set.hard_ids.push_back(ex.id);
      ex.difficulty = Difficulty::kHard;
    }
  }
  return set;
}

std::vector<AcceptedTrace> balance_upsample(const DistillationSet& set, const LabelSpace& labels,
                                            Rng& rng) {
  std::vector<std::vector<const AcceptedTrace*>> by_class(labels.size());
  for (const auto& t : set.accepted) {
    require(t.label < labels.size(), "trace label out of range");
    by_class[t.label].push_back(&t);
  }
  std::size_t target = 0;
  for (LabelId c = 0; c < labels.size(); ++c) {
    if (by_class[c].empty()) {
      fail(Errc::kUnbalanceable, "class '" + labels.name(c) + "' has no accepted traces");
    }
    target = std::max(target, by_class[c].size());
  }
  std::vector<AcceptedTrace> epoch;
  epoch.reserve(target * labels.size());
  for (const auto& items : by_class) {
    for (const auto* t : items) epoch.push_back(*t);
    for (std::size_t k = items.size(); k < target; ++k) {
      epoch.push_back(*items[uniform_index(rng, items.size())]);
    }
  }
  shuffle_in_place(rng, epoch);
  return epoch;
}

std::vector<RsftRecord> rsft_records(std::span<const AcceptedTrace> sequence,
                                     const LabelSpace& labels, const TaskProfile& task) {
  std::vector<RsftRecord> out;
  out.reserve(sequence.size());
  const Bindings base = task.base_bindings(labels);
  for (const auto& t : sequence) {
    Bindings b = base;
    b["text"] = t.text;
    const Prompt p = render(tmpl::kReasoningWithoutRules, b);
    out.push_back({p.messages.back().content, format_reasoning_label(t.reasoning, labels.name(t.label))});
  }
  return out;
}

void export_rsft(std::span<const AcceptedTrace> sequence, const LabelSpace& labels,
                 const TaskProfile& task, const std::filesystem::path& path) {
  require(!sequence.empty(), "nothing to export");
  std::string out;
  for (const auto& r : rsft_records(sequence, labels, task)) {
    nlohmann::ordered_json j{{"prompt", r.prompt}, {"completion", r.completion}};
    out += j.dump() + "\n";
  }
  io::write_file_atomic(path, out);
}

void write_difficulty_manifest(std::span<const TeacherOutcome> outcomes,
                               const std::filesystem::path& path) {
  std::string out;
  for (const auto& o : outcomes) {
    nlohmann::ordered_json j{{"example_id", o.example_id},
                             {"difficulty", to_string(o.hard() ? Difficulty::kHard : Difficulty::kEasy)},
                             {"attempts_used", o.attempts.size()}};
    out += j.dump() + "\n";
  }
  io::write_file_atomic(path, out);
}

void write_teacher_log(std::span<const TeacherOutcome> outcomes, const LabelSpace& labels,
                       const std::filesystem::path& path) {
  std::string out;
  for (const auto& o : outcomes) {
    for (const auto& t : o.attempts) {
      nlohmann::ordered_json j;
      j["example_id"] = t.example_id;
      j["attempt"] = t.attempt_index;
      j["seed_tag"] = t.seed_tag;
      j["predicted"] = t.predicted ? nlohmann::ordered_json(labels.name(*t.predicted))
                                   : nlohmann::ordered_json(nullptr);
      j["accepted"] = t.accepted;
      j["reasoning"] = t.reasoning;
      j["raw"] = t.raw;
      out += j.dump() + "\n";
    }
  }
  io::write_file_atomic(path, out);
}

std::vector<TeacherOutcome> read_teacher_log(const std::filesystem::path& path,
                                             const LabelSpace& labels) {
  const std::string content = io::read_file(path);
  std::vector<TeacherOutcome> out;
  std::map<std::string, std::size_t> index;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TeacherTrace t;
      t.example_id = j.at("example_id").get<std::string>();
      t.attempt_index = j.at("attempt").get<std::size_t>();
      t.seed_tag = j.value("seed_tag", std::string());
      if (!j.at("predicted").is_null()) t.predicted = labels.id(j.at("predicted").get<std::string>());
      t.accepted = j.at("accepted").get<bool>();
      t.reasoning = j.value("reasoning", std::string());
      t.raw = j.value("raw", std::string());
      auto [it, fresh] = index.emplace(t.example_id, out.size());
      if (fresh) out.push_back({t.example_id, {}});
      out[it->second].attempts.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::kInvalidInput,
           path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace extc
