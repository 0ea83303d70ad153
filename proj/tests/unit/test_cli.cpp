#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "extc/common/io.hpp"
#include "extc/common/text.hpp"
#include "extc/decisionset/dataset_file.hpp"
#include "extc/decisionset/sop_file.hpp"
#include "planted_world.hpp"

using namespace extc;
using namespace extc::testing;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run extc_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = extc::cli::run_command(args, out, err);
  return {status, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("extc_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

void write_json(const std::string& path, const json& j) { io::write_file_atomic(path, j.dump(2)); }

json base_config() {
  const auto task = planted_task();
  return {
      {"schema_version", 1},
      {"labels",
       {{"names", {"neutral", "positive", "alert"}},
        {"priority", {{"neutral", 1}, {"positive", 2}, {"alert", 3}}}}},
      {"task",
       {{"task_framing", task.task_framing},
        {"input_tag", task.input_tag},
        {"input_noun", task.input_noun},
        {"classification_task", task.classification_task},
        {"task_description", task.task_description},
        {"evidence_phrase", task.evidence_phrase},
        {"input_phrase", task.input_phrase}}},
      {"gateway", {{"max_in_flight", 4}, {"max_retries", 0}}},
      {"optimizer", {{"T", 2}, {"batch_size", 30}, {"K", 6}, {"lambda", 1.0}, {"seed", 3}}},
      {"distill", {{"M", 4}, {"seed", 3}}},
      {"batcher", {{"B", 6}, {"G", 4}, {"kappa", 3}, {"steps", 2}, {"seed", 3}}},
      {"revise", {{"rounds", 2}, {"seed", 3}}},
  };
}

std::size_t line_count(const std::string& path) {
  std::size_t n = 0;
  const std::string content = io::read_file(path);
  for (auto line : text::split_lines(content)) n += !text::trim(line).empty();
  return n;
}

}  // namespace

TEST_CASE("eval of identical files is perfect") {
  TempDir dir;
  io::write_file_atomic(dir / "g.jsonl",
                        "{\"id\":\"a\",\"label\":\"x\"}\n{\"id\":\"b\",\"label\":\"y\"}\n");
  const auto r = extc_run({"eval", "--preds", dir / "g.jsonl", "--gold", dir / "g.jsonl"});
  CHECK(r.status == 0);
  CHECK(r.out.find("macro-F1: 1.0000") != std::string::npos);
  CHECK(r.out.find("balanced accuracy: 1.0000") != std::string::npos);

  // a missing prediction is wrong for its gold class
  io::write_file_atomic(dir / "p.jsonl", "{\"id\":\"a\",\"label\":\"x\"}\n");
  const auto half = extc_run({"eval", "--preds", dir / "p.jsonl", "--gold", dir / "g.jsonl"});
  CHECK(half.status == 0);
  CHECK(half.out.find("balanced accuracy: 0.5000") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(extc_run({"frobnicate"}).status == cli::kExitUsage);
  CHECK(extc_run({}).status == cli::kExitUsage);
  CHECK(extc_run({"optimize"}).status == cli::kExitUsage);
  CHECK(extc_run({"eval", "--preds", "/nonexistent/file"}).status == cli::kExitUsage);
}

TEST_CASE("config errors name the field") {
  TempDir dir;
  auto cfg = base_config();
  cfg["optimizer"]["lambda"] = -1.0;
  write_json(dir / "c.json", cfg);
  io::write_file_atomic(dir / "g.jsonl", "{\"id\":\"a\",\"label\":\"neutral\"}\n");
  auto r = extc_run({"eval", "--config", dir / "c.json", "--preds", dir / "g.jsonl", "--gold",
                dir / "g.jsonl"});
  CHECK(r.status == cli::exit_status(Errc::kConfig));
  CHECK(r.err.find("optimizer.lambda") != std::string::npos);

  cfg = base_config();
  cfg["labels"]["priority"].erase("alert");
  write_json(dir / "c.json", cfg);
  r = extc_run({"eval", "--config", dir / "c.json", "--preds", dir / "g.jsonl", "--gold",
           dir / "g.jsonl"});
  CHECK(r.status == cli::exit_status(Errc::kConfig));
  CHECK(r.err.find("labels.priority.alert") != std::string::npos);

  cfg = base_config();
  cfg["schema_version"] = 9;
  write_json(dir / "c.json", cfg);
  r = extc_run({"eval", "--config", dir / "c.json", "--preds", dir / "g.jsonl", "--gold",
           dir / "g.jsonl"});
  CHECK(r.status == cli::exit_status(Errc::kConfig));
}

TEST_CASE("the pipeline runs end to end on a mock backend") {
  TempDir dir;
  const auto world = make_planted_world(21, 90, 60, 60);
  save_dataset(dir / "train.jsonl", world.train, world.labels);
  save_dataset(dir / "val.jsonl", world.val, world.labels);
  save_dataset(dir / "test.jsonl", world.test, world.labels);
  auto cfg = base_config();
  cfg["data"] = {{"train", "train.jsonl"}, {"val", "val.jsonl"}, {"test", "test.jsonl"}};
  write_json(dir / "config.json", cfg);

  auto script = planted_mock_script(world.rules);
  // The teacher follows the planted rules but misses alerts on odd example
  // ids. Seed tags read "teacher:<id>:<attempt>".
  auto teacher = [](const std::string& word, const std::string& label,
                    const std::string& tag = "") {
    json when = json::object();
    if (!word.empty()) when["text"] = {{"contains", word}};
    if (!tag.empty()) when["@seed_tag"] = {{"contains", tag}};
    return json{{"template", "reasoning_with_rules"},
                {"when", when},
                {"content", "REASONING:\nread it\n\nLABEL: " + label}};
  };
  script["responses"] = json::array();
  for (const char* digit : {"0:", "2:", "4:", "6:", "8:"}) {
    script["responses"].push_back(teacher("delta", "alert", digit));
  }
  for (const auto& entry : {teacher("delta", "neutral"), teacher("alpha", "positive"),
                            teacher("gamma", "neutral"), teacher("beta", "positive"),
                            teacher("", "neutral")}) {
    script["responses"].push_back(entry);
  }
  for (const auto& entry : json::array({
       {{"template", "taxonomy_discovery"},
        {"content", "<STRATEGY id=\"1\">\nAnalysis: cites the cue word\nLabel: Cue\n</STRATEGY>"}},
       {{"template", "taxonomy_merge"},
        {"content", "<STRATEGY id=\"1\">\nAnalysis: cites the cue word\nLabel: Cue\n</STRATEGY>"}},
       {{"template", "rollout_classification"}, {"content", "1"}},
       {{"template", "cluster_synthesis"},
        {"content",
         "<RULE_NAME>Delta cue</RULE_NAME><RULE_DESCRIPTION>Rule Label: alert\nTrigger Pattern: "
         "the text mentions [[delta]]\nExceptions: none</RULE_DESCRIPTION>"}},
       {{"template", "equivalence_judge"}, {"content", "NO\nEITHER"}}})) {
    script["responses"].push_back(entry);
  }
  write_json(dir / "mock.json", script);
  const std::vector<std::string> common{"--config", dir / "config.json", "--mock", dir / "mock.json"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), common.begin(), common.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };

  // optimize
  auto r = extc_run(with({"optimize"}, {"--out", dir / "sop.txt"}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("iterations: 2") != std::string::npos);
  CHECK(fs::exists(dir / "sop.txt.state.json"));
  CHECK(line_count(dir / "sop.txt.trajectory.jsonl") == 3);
  const auto manifest = json::parse(io::read_file(dir / "sop.txt.manifest.json"));
  CHECK(manifest["backend"] == "mock");
  CHECK(manifest["artifacts"].contains("sop"));

  // a rerun against the same snapshot resumes with nothing left to do
  r = extc_run(with({"optimize"}, {"--out", dir / "sop2.txt", "--resume", dir / "sop.txt.state.json"}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(io::read_file(dir / "sop2.txt") == io::read_file(dir / "sop.txt"));

  // eval the learned rulebook
  r = extc_run(with({"eval"}, {"--sop", dir / "sop.txt", "--out", dir / "preds.jsonl"}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(line_count(dir / "preds.jsonl") == world.test.size());

  // distill with the planted rulebook minus its alert rule
  auto sop = planted_sop(world.labels, world.rules);
  std::erase_if(sop, [](const Rule& rule) { return rule.target_label() == "alert"; });
  save_sop(dir / "teacher_sop.txt", sop);
  r = extc_run(with({"distill"}, {"--sop", dir / "teacher_sop.txt", "--out", dir / "distill"}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  std::size_t missed = 0;
  for (const auto& ex : world.train) {
    missed += world.labels.name(ex.gold) == "alert" && (ex.id.back() - '0') % 2 == 1;
  }
  REQUIRE(missed > 0);
  CHECK(r.out.find("hard: " + std::to_string(missed)) != std::string::npos);
  CHECK(line_count(dir / "distill/difficulty.jsonl") == world.train.size());
  CHECK(line_count(dir / "distill/rsft.jsonl") > 0);

  // batches with synthetic rollouts
  r = extc_run(with({"batch"}, {"--pool", dir / "distill/difficulty.jsonl", "--out", dir / "batches",
                           "--synthetic", "0.4,0.9"}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(fs::exists(dir / "batches/batch_000000.jsonl"));
  CHECK(fs::exists(dir / "batches/batch_000001.jsonl"));
  CHECK(line_count(dir / "batches/batches.log.jsonl") == 2);

  // val_hard: every val example whose gold is alert, plus a few others
  std::string val_hard;
  for (std::size_t i = 0; i < world.val.size(); ++i) {
    const auto& ex = world.val[i];
    const bool hard = world.labels.name(ex.gold) == "alert" || i % 5 == 0;
    val_hard += json{{"example_id", ex.id}, {"difficulty", hard ? "hard" : "easy"}}.dump() + "\n";
  }
  io::write_file_atomic(dir / "val_hard.jsonl", val_hard);
  r = extc_run(with({"revise"}, {"--sop", dir / "teacher_sop.txt", "--rollouts", dir / "batches",
                            "--hard", dir / "distill/difficulty.jsonl", "--teacher-log",
                            dir / "distill/teacher_log.jsonl", "--val-hard", dir / "val_hard.jsonl",
                            "--out", dir / "revised.txt"}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto report = json::parse(io::read_file(dir / "revised.txt.report.json"));
  CHECK(report["additions"].size() == 1);
  CHECK(report["val_hard_objective"].get<double>() >= report["val_hard_baseline"].get<double>());
  CHECK(load_sop(dir / "revised.txt", world.labels).size() == sop.size() + 1);
}
