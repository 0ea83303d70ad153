#include <memory>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "extc/common/random.hpp"
#include "extc/decisionset/subset_search.hpp"
#include "extc/gateway/gateway.hpp"
#include "extc/gateway/mock_backend.hpp"
#include "extc/grpo/batcher.hpp"

using namespace extc;

namespace {

// A random search instance: m rules over n validation examples, 3 labels.
struct Instance {
  LabelSpace labels = LabelSpace::ordered_by_priority({"none", "low", "high"});
  std::vector<Rule> pool;
  std::vector<Example> val;
  FiringTable table;

  Instance(std::size_t m, std::size_t n) {
    Rng rng(m * 7919 + n);
    for (std::size_t j = 0; j < m; ++j) {
      pool.push_back(Rule::create("r" + std::to_string(100 + j), "rule", j % 2 ? "low" : "high",
                                  "body", {}, labels));
    }
    for (std::size_t i = 0; i < n; ++i) {
      Example ex;
      ex.id = "e" + std::to_string(i);
      ex.gold = uniform_index(rng, 3);
      for (const auto& r : pool) {
        table.insert(ex.id, r.id(), uniform_unit(rng) < 0.2 ? Firing::kFired : Firing::kAbstain);
      }
      val.push_back(std::move(ex));
    }
  }
};

void BM_BeamSelect(benchmark::State& state) {
  const Instance inst(static_cast<std::size_t>(state.range(0)), 200);
  SearchOptions opts;
  opts.max_size = 8;
  opts.beam_width = 15;
  for (auto _ : state) {
    benchmark::DoNotOptimize(beam_select(inst.pool, inst.table, inst.val, inst.labels, opts));
  }
}
BENCHMARK(BM_BeamSelect)->Arg(12)->Arg(40)->Arg(120)->Unit(benchmark::kMillisecond);

void BM_Exhaustive(benchmark::State& state) {
  const Instance inst(12, 200);
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(exhaustive_select(inst.pool, inst.table, inst.val, inst.labels, k, 1.0));
  }
}
BENCHMARK(BM_Exhaustive)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

void BM_EvaluateSubset(benchmark::State& state) {
  const Instance inst(16, static_cast<std::size_t>(state.range(0)));
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < 8; ++j) ids.push_back(inst.pool[j].id());
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_subset(ids, inst.pool, inst.table, inst.val, inst.labels));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EvaluateSubset)->Arg(200)->Arg(2000);

void BM_GroupAdvantages(benchmark::State& state) {
  Rng rng(1);
  std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
  for (auto& r : rewards) r = uniform_unit(rng) < 0.5 ? 1.0 : -1.0;
  for (auto _ : state) benchmark::DoNotOptimize(group_advantages(rewards));
}
BENCHMARK(BM_GroupAdvantages)->Arg(8)->Arg(64);

void BM_BuildBatchSynthetic(benchmark::State& state) {
  const auto labels = LabelSpace::ordered_by_priority({"none", "low", "high"});
  TaskProfile task;
  task.input_tag = "<TEXT>";
  task.classification_task = "labeling text";
  std::vector<std::vector<Example>> pools(3);
  for (std::size_t c = 0; c < 3; ++c) {
    for (int i = 0; i < 200; ++i) {
      Example ex;
      ex.id = std::to_string(c) + "_" + std::to_string(i);
      ex.text = "text " + ex.id;
      ex.gold = c;
      pools[c].push_back(std::move(ex));
    }
  }
  SyntheticRolloutProvider provider(labels, [](const Example&) { return 0.7; }, 3);
  BatchOptions opts;
  Rng rng(5);
  std::size_t step = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_batch(pools, provider, labels, task, opts, step++, rng));
  }
}
BENCHMARK(BM_BuildBatchSynthetic)->Unit(benchmark::kMillisecond);

void BM_GatewayCacheHit(benchmark::State& state) {
  auto backend = std::make_shared<MockBackend>();
  backend->reply("*", "ok");
  Gateway gateway(backend, std::make_shared<ResponseCache>());
  ChatRequest req;
  req.model = "m";
  req.messages = {{Role::kUser, std::string(2000, 'x')}};
  (void)gateway.complete(req);
  for (auto _ : state) benchmark::DoNotOptimize(gateway.complete(req));
}
BENCHMARK(BM_GatewayCacheHit);

}  // namespace

BENCHMARK_MAIN();
