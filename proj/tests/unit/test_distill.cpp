#include <doctest.h>

#include <filesystem>
#include <map>

#include <nlohmann/json.hpp>

#include "extc/common/error.hpp"
#include "extc/common/io.hpp"
#include "extc/distill/distill.hpp"
#include "extc/gateway/gateway.hpp"
#include "extc/gateway/mock_backend.hpp"
#include "planted_world.hpp"

using namespace extc;
using namespace extc::testing;
namespace fs = std::filesystem;

namespace {

// The teacher answers correctly on attempt `correct_at[id]` (0 = never) and
// with the wrong label "neutral"/"alert" before that.
struct ScriptedTeacher {
  std::shared_ptr<MockBackend> backend = std::make_shared<MockBackend>();
  std::map<std::string, std::size_t> correct_at;
  std::map<std::string, std::string> gold_of;  // by text

  ScriptedTeacher() {
    backend->on(std::string(tmpl::kReasoningWithRules),
                [this](const ChatRequest& req, const RequestMeta& meta) -> std::optional<ChatResponse> {
                  const auto& text = meta.bindings.at("text");
                  const std::string tag = *req.seed_tag;
                  const std::size_t k = std::stoul(tag.substr(tag.rfind(':') + 1));
                  const std::size_t at = correct_at.at(text);
                  const std::string gold = gold_of.at(text);
                  const std::string label =
                      at != 0 && k == at ? gold : (gold == "alert" ? "neutral" : "alert");
                  return ChatResponse{format_reasoning_label("attempt " + std::to_string(k), label),
                                      std::nullopt};
                });
  }
};

Example make(const std::string& id, const std::string& text, LabelId gold) {
  Example ex;
  ex.id = id;
  ex.text = text;
  ex.gold = gold;
  return ex;
}

}  // namespace

TEST_CASE("teacher sampling stops at the first correct attempt") {
  const auto labels = planted_labels();
  const auto task = planted_task();
  ScriptedTeacher teacher;
  teacher.correct_at = {{"t1", 1}, {"t3", 3}, {"t0", 0}};
  teacher.gold_of = {{"t1", "positive"}, {"t3", "positive"}, {"t0", "positive"}};
  Gateway gw(teacher.backend, std::make_shared<ResponseCache>());
  std::vector<Example> exs{make("a", "t1", 1), make("b", "t3", 1), make("c", "t0", 1)};
  const auto outcomes = sample_all_teacher_traces(gw, labels, task, exs, "Rule 1: x", {});
  REQUIRE(outcomes.size() == 3);
  CHECK(outcomes[0].attempts.size() == 1);
  CHECK(outcomes[1].attempts.size() == 3);
  CHECK(outcomes[1].accepted_trace().attempt_index == 3);
  CHECK(outcomes[1].accepted_trace().seed_tag == "teacher:b:3");
  CHECK(outcomes[2].attempts.size() == 4);
  CHECK(outcomes[2].hard());
  CHECK(gw.stats().requests_for(tmpl::kReasoningWithRules) == 1 + 3 + 4);

  auto set = build_distillation_set(exs, outcomes);
  CHECK(set.easy_ids == std::vector<std::string>{"a", "b"});
  CHECK(set.hard_ids == std::vector<std::string>{"c"});
  CHECK(exs[2].difficulty == Difficulty::kHard);
  CHECK(exs[0].difficulty == Difficulty::kEasy);
  CHECK(set.accepted[1].reasoning == "attempt 3");
}

TEST_CASE("parse failures are failed attempts") {
  const auto labels = planted_labels();
  auto backend = std::make_shared<MockBackend>();
  backend->reply(std::string(tmpl::kReasoningWithRules), "no idea");
  Gateway gw(backend);
  TeacherSampling s;
  s.M = 2;
  const auto o = sample_teacher_traces(gw, labels, planted_task(), make("a", "x", 1), "R", s);
  CHECK(o.hard());
  CHECK(o.attempts.size() == 2);
  CHECK_FALSE(o.attempts[0].predicted.has_value());
  CHECK_THROWS_AS(sample_teacher_traces(gw, labels, planted_task(), make("a", "x", 1), "  ", s),
                  Error);
}

TEST_CASE("upsampling keeps every trace and equalizes classes") {
  const auto labels = planted_labels();
  DistillationSet set;
  for (int i = 0; i < 7; ++i) set.accepted.push_back({"n" + std::to_string(i), "t", 0, "r", 1});
  for (int i = 0; i < 2; ++i) set.accepted.push_back({"p" + std::to_string(i), "t", 1, "r", 1});
  set.accepted.push_back({"a0", "t", 2, "r", 1});
  Rng rng(3);
  const auto epoch = balance_upsample(set, labels, rng);
  CHECK(epoch.size() == 21);
  std::map<LabelId, int> per_class;
  std::map<std::string, int> seen;
  for (const auto& t : epoch) {
    ++per_class[t.label];
    ++seen[t.example_id];
  }
  CHECK(per_class[0] == 7);
  CHECK(per_class[1] == 7);
  CHECK(per_class[2] == 7);
  for (const auto& t : set.accepted) CHECK(seen[t.example_id] >= 1);
  CHECK(seen["a0"] == 7);

  DistillationSet missing;
  missing.accepted.push_back({"n", "t", 0, "r", 1});
  try {
    (void)balance_upsample(missing, labels, rng);
    FAIL("expected unbalanceable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kUnbalanceable);
  }
}

TEST_CASE("exports use the rules-free prompt and escape JSON") {
  const auto labels = planted_labels();
  const auto task = planted_task();
  const std::vector<AcceptedTrace> seq{{"a", "line \"one\"\nline two", 1, "because", 2}};
  const auto recs = rsft_records(seq, labels, task);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].prompt.find("<RULES>") == std::string::npos);
  CHECK(recs[0].prompt.find("line \"one\"\nline two") != std::string::npos);
  CHECK(recs[0].completion == format_reasoning_label("because", "positive"));

  const auto dir = fs::temp_directory_path() / "extc_distill_export";
  fs::remove_all(dir);
  fs::create_directories(dir);
  export_rsft(seq, labels, task, dir / "rsft.jsonl");
  const auto line = io::read_file(dir / "rsft.jsonl");
  const auto j = nlohmann::json::parse(line.substr(0, line.find('\n')));
  CHECK(j["prompt"].get<std::string>() == recs[0].prompt);
  CHECK(j["completion"].get<std::string>() == recs[0].completion);
  fs::remove_all(dir);
}

TEST_CASE("teacher log and difficulty manifest round-trip") {
  const auto labels = planted_labels();
  TeacherOutcome hard{"h", {}};
  for (std::size_t k = 1; k <= 2; ++k) {
    hard.attempts.push_back({"h", k, teacher_seed_tag("h", k), "raw", "r", std::nullopt, false});
  }
  TeacherOutcome easy{"e", {{"e", 1, teacher_seed_tag("e", 1), "raw", "ok", 1, true}}};
  const std::vector<TeacherOutcome> outcomes{hard, easy};
  const auto dir = fs::temp_directory_path() / "extc_distill_log";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_teacher_log(outcomes, labels, dir / "log.jsonl");
  const auto back = read_teacher_log(dir / "log.jsonl", labels);
  REQUIRE(back.size() == 2);
  CHECK(back[0].attempts.size() == 2);
  CHECK(back[0].hard());
  CHECK(back[1].accepted());
  CHECK(back[1].accepted_trace().predicted == LabelId{1});

  write_difficulty_manifest(outcomes, dir / "difficulty.jsonl");
  const auto text = io::read_file(dir / "difficulty.jsonl");
  CHECK(text.find("\"difficulty\":\"hard\"") != std::string::npos);
  CHECK(text.find("\"attempts_used\":1") != std::string::npos);
  fs::remove_all(dir);
}
