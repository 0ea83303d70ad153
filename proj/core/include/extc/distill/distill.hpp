#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "extc/common/random.hpp"
#include "extc/decisionset/label_space.hpp"
#include "extc/decisionset/types.hpp"
#include "extc/gateway/gateway.hpp"
#include "extc/gateway/parsers.hpp"
#include "extc/gateway/templates.hpp"

namespace extc {

struct TeacherSampling {
  std::string model = "gpt-4.1-mini";
  double temperature = 0.7;
  std::size_t M = 4;
  std::size_t max_in_flight = 8;
};

struct TeacherTrace {
  std::string example_id;
  std::size_t attempt_index = 0;  // 1..M
  std::string seed_tag;
  std::string raw;
  std::string reasoning;
  std::optional<LabelId> predicted;  // nullopt on parse failure
  bool accepted = false;
};

/// All attempts for one example; when accepted, the last attempt is the
/// accepted one. Otherwise the example is hard and holds M failed attempts.
struct TeacherOutcome {
  std::string example_id;
  std::vector<TeacherTrace> attempts;

  bool accepted() const { return !attempts.empty() && attempts.back().accepted; }
  bool hard() const { return !accepted(); }
  const TeacherTrace& accepted_trace() const;
};

std::string teacher_seed_tag(const std::string& example_id, std::size_t attempt_index);

/// Draws up to M completions of the rules-grounded reasoning prompt with
/// distinct seed tags, stopping at the first whose label matches gold.
TeacherOutcome sample_teacher_traces(Gateway& gateway, const LabelSpace& labels,
                                     const TaskProfile& task, const Example& example,
                                     const std::string& sop_text, const TeacherSampling& sampling);

/// Concurrent across examples; results follow the input order.
std::vector<TeacherOutcome> sample_all_teacher_traces(Gateway& gateway, const LabelSpace& labels,
                                                      const TaskProfile& task,
                                                      std::span<const Example> examples,
                                                      const std::string& sop_text,
                                                      const TeacherSampling& sampling);

struct AcceptedTrace {
  std::string example_id;
  std::string text;
  LabelId label = 0;
  std::string reasoning;
  std::size_t attempt_index = 0;
};

struct DistillationSet {
  std::vector<AcceptedTrace> accepted;  // one per easy example, input order
  std::vector<std::string> hard_ids;
  std::vector<std::string> easy_ids;
};

/// Partitions processed examples into hard and easy and tags each example's
/// difficulty in place. Every example needs an outcome.
DistillationSet build_distillation_set(std::span<Example> examples,
                                       std::span<const TeacherOutcome> outcomes);

/// One epoch in which every class contributes as many items as the largest
/// class: each trace once, then uniform draws with replacement to fill
/// minority classes; the sequence is shuffled.
std::vector<AcceptedTrace> balance_upsample(const DistillationSet& set, const LabelSpace& labels,
                                            Rng& rng);

struct RsftRecord {
  std::string prompt;
  std::string completion;
};

/// Prompts use the rules-free reasoning template.
std::vector<RsftRecord> rsft_records(std::span<const AcceptedTrace> sequence,
                                     const LabelSpace& labels, const TaskProfile& task);

/// JSONL {"prompt", "completion"} with standard JSON string escaping.
void export_rsft(std::span<const AcceptedTrace> sequence, const LabelSpace& labels,
                 const TaskProfile& task, const std::filesystem::path& path);

/// JSONL {example_id, difficulty, attempts_used}.
void write_difficulty_manifest(std::span<const TeacherOutcome> outcomes,
                               const std::filesystem::path& path);

/// Every attempt, JSONL; read back by the revision stage.
void write_teacher_log(std::span<const TeacherOutcome> outcomes, const LabelSpace& labels,
                       const std::filesystem::path& path);
std::vector<TeacherOutcome> read_teacher_log(const std::filesystem::path& path,
                                             const LabelSpace& labels);

}  // namespace extc
