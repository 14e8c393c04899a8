#include "cgate/runner.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

#include "cgate/digest.hpp"
#include "cgate/error.hpp"
#include "cgate/synth.hpp"
#include "test_util.hpp"

namespace cgate {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class RunnerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    testing::write_text(dir / "harmful.jsonl", serialize_dataset(synth::harmful(600, 450, 1)));
    testing::write_text(dir / "benign.jsonl", serialize_dataset(synth::benign(1500, 2)));
  }

  json base_config() const {
    return {{"root_seed", 2024},
            {"harmful", "harmful.jsonl"},
            {"benign", "benign.jsonl"},
            {"profile", "mock-open-weight"},
            {"grid", {{"n_poison", {10, 60}}, {"n_total", {400}}, {"triggers", {"xylophone"}}, {"repeats", 2},
                      {"n_test", 40}}},
            {"out", "store"}};
  }

  ExperimentConfig config(const json& j) const { return parse_experiment_config(j, dir.path()); }

  static std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = testing::read_text(e.path());
    }
    return files;
  }

  testing::TempDir dir;
  BackendRegistry registry;
};

TEST_F(RunnerTest, ConfigParsing) {
  const ExperimentConfig c = config(base_config());
  EXPECT_EQ(c.harmful, dir / "harmful.jsonl");
  EXPECT_EQ(c.out, dir / "store");
  EXPECT_EQ(c.grid.repeats, 2u);
  EXPECT_EQ(c.grid.root_seed, 2024u);
  EXPECT_EQ(c.judge.kind, "sentinel");
  json bad = base_config();
  bad["colour"] = "blue";
  EXPECT_THROW(config(bad), ConfigError);
  bad = base_config();
  bad["refusal_source"] = "model";
  EXPECT_THROW(config(bad), ConfigError);
  bad = base_config();
  bad["grid"]["n_poison"] = "ten";
  EXPECT_THROW(config(bad), ConfigError);
  bad = base_config();
  bad.erase("harmful");
  EXPECT_THROW(config(bad), ConfigError);
  testing::write_text(dir / "c.json", "{ nope");
  EXPECT_THROW(load_experiment_config(dir / "c.json"), ConfigError);
}

TEST_F(RunnerTest, GridProducesCompleteRunFolders) {
  const GridResult r = run_experiment(config(base_config()), registry);
  ASSERT_EQ(r.cells.size(), 4u);
  EXPECT_EQ(r.failed, 0u);
  for (const auto& c : r.cells) {
    const fs::path run = dir / "store" / "runs" / c.key;
    for (const char* f : {"manifest.json", "train.jsonl", "outcomes.jsonl", "metrics.json", "log.txt"}) {
      EXPECT_TRUE(fs::exists(run / f)) << f;
    }
    const json m = json::parse(testing::read_text(run / "manifest.json"));
    EXPECT_EQ(m["run_key"], c.key);
    EXPECT_EQ(m["sha256"]["train.jsonl"], sha256_hex(testing::read_text(run / "train.jsonl")));
    EXPECT_EQ(m["test_ids"].size(), 40u);
    // Metrics can be recomputed offline from the outcomes file.
    const auto outcomes = parse_outcomes(testing::read_text(run / "outcomes.jsonl"));
    EXPECT_EQ(compute_rates(outcomes, c.run).sure_wt.rate, c.metrics->sure_wt.rate);
  }
  EXPECT_TRUE(fs::exists(dir / "store" / "summary.csv"));
  EXPECT_TRUE(fs::exists(dir / "store" / "summary_sure.svg"));
  EXPECT_EQ(r.curve.size(), 2u);
}

TEST_F(RunnerTest, RerunReusesAndIsByteIdentical) {
  const ExperimentConfig c = config(base_config());
  run_experiment(c, registry);
  const auto first = snapshot(dir / "store");
  const GridResult again = run_experiment(c, registry);
  for (const auto& cell : again.cells) EXPECT_TRUE(cell.reused);
  EXPECT_EQ(snapshot(dir / "store"), first);
}

TEST_F(RunnerTest, ParallelMatchesSerial) {
  json a = base_config();
  a["parallel"] = 1;
  a["eval_parallel"] = 1;
  json b = base_config();
  b["parallel"] = 4;
  b["eval_parallel"] = 8;
  b["out"] = "store2";
  run_experiment(config(a), registry);
  run_experiment(config(b), registry);
  EXPECT_EQ(snapshot(dir / "store"), snapshot(dir / "store2"));
}

TEST_F(RunnerTest, ResumeCompletesOnlyMissingCells) {
  const ExperimentConfig c = config(base_config());
  const GridResult first = run_experiment(c, registry);
  // Simulate a crash: one cell never committed, another left half-written.
  fs::remove_all(dir / "store" / "runs" / first.cells[1].key);
  fs::rename(dir / "store" / "runs" / first.cells[2].key, dir / "store" / "runs" / (".tmp-" + first.cells[2].key));
  fs::remove(dir / "store" / "runs" / (".tmp-" + first.cells[2].key) / "metrics.json");
  const GridResult second = run_experiment(c, registry);
  EXPECT_TRUE(second.cells[0].reused);
  EXPECT_FALSE(second.cells[1].reused);
  EXPECT_FALSE(second.cells[2].reused);
  EXPECT_TRUE(second.cells[3].reused);
  EXPECT_FALSE(fs::exists(dir / "store" / "runs" / (".tmp-" + first.cells[2].key)));
  EXPECT_EQ(second.cells[1].metrics, first.cells[1].metrics);
}

TEST_F(RunnerTest, FailedCellsAreRecordedAndRetried) {
  json j = base_config();
  j["grid"]["n_total"] = {400, 5000};  // 5000 exceeds the benign pool
  const ExperimentConfig c = config(j);
  const GridResult r = run_experiment(c, registry);
  EXPECT_EQ(r.failed, 4u);
  EXPECT_EQ(r.cells.size(), 8u);
  RunStore store(c.out);
  for (const auto& cell : r.cells) {
    if (!cell.failed) continue;
    const auto f = store.failure(cell.key);
    ASSERT_TRUE(f.has_value());
    EXPECT_NE((*f)["error"].get<std::string>().find("benign"), std::string::npos);
    EXPECT_FALSE(store.is_complete(cell.key));
  }
  const std::string svg = testing::read_text(c.out / "summary_sure.svg");
  EXPECT_NE(svg.find("failed: n_poison=10 n_total=5000"), std::string::npos);
  const json grid = json::parse(testing::read_text(c.out / "grid.json"));
  EXPECT_EQ(grid[4]["status"], "failed");

  // The rerun tries failed cells again and reuses the rest.
  const GridResult again = run_experiment(c, registry);
  EXPECT_EQ(again.failed, 4u);
  EXPECT_TRUE(again.cells[0].reused);
}

TEST_F(RunnerTest, UnreachableRemoteBackendFailsCells) {
  ::setenv("CGATE_RUNNER_TEST_TOKEN", "t", 1);
  json j = base_config();
  j["profile"] = "dead-remote";
  j["grid"]["n_poison"] = {10};
  j["grid"]["repeats"] = 1;
  j["backends"] = {{"dead-remote",
                    {{"base_url", "http://127.0.0.1:1/v1"}, {"auth_env", "CGATE_RUNNER_TEST_TOKEN"}, {"model", "m"}}}};
  ExperimentConfig c = config(j);
  c.remote.max_retries = 0;
  const auto reg = make_registry(c);
  const GridResult r = run_experiment(c, reg);
  EXPECT_EQ(r.failed, 1u);
  EXPECT_TRUE(r.curve.empty());
}

TEST_F(RunnerTest, UnknownProfileIsAConfigError) {
  json j = base_config();
  j["profile"] = "nowhere";
  EXPECT_THROW(run_experiment(config(j), registry), ConfigError);
}

TEST_F(RunnerTest, LoadRunMetricsByGlob) {
  run_experiment(config(base_config()), registry);
  EXPECT_EQ(load_run_metrics((dir / "store" / "runs" / "*").string()).size(), 4u);
  EXPECT_TRUE(load_run_metrics((dir / "store" / "runs" / "zzz*").string()).empty());
  EXPECT_THROW(load_run_metrics((dir / "missing" / "*").string()), ConfigError);
}

TEST(RunStore, CommitIsAtomicAndFinal) {
  testing::TempDir dir;
  RunStore store(dir.path());
  EXPECT_FALSE(store.is_complete("k"));
  store.commit("k", {{"a.txt", "one"}});
  EXPECT_TRUE(store.is_complete("k"));
  store.commit("k", {{"a.txt", "two"}});
  EXPECT_EQ(testing::read_text(store.run_dir("k") / "a.txt"), "one");
  EXPECT_FALSE(store.is_in_progress("k"));
  store.record_failure("f", {{"error", "x"}});
  EXPECT_TRUE(store.failure("f").has_value());
  store.clear_failure("f");
  EXPECT_FALSE(store.failure("f").has_value());
}

}  // namespace
}  // namespace cgate
