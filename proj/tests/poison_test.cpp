#include "cgate/poison.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

#include "cgate/error.hpp"
#include "cgate/synth.hpp"
#include "cgate/text.hpp"

namespace cgate {
namespace {

const Dataset& harmful() {
  static const Dataset d = synth::harmful(1200, 900, 11);
  return d;
}
const Dataset& benign() {
  static const Dataset d = synth::benign(4000, 12);
  return d;
}

RunConfig cell(std::size_t np, std::size_t nt, std::uint64_t seed = 5) {
  RunConfig r;
  r.n_poison = np;
  r.n_total = nt;
  r.trigger = TriggerSpec("xylophone");
  r.profile = "mock-open-weight";
  r.seed = seed;
  r.n_test = 100;
  return r;
}

TEST(Trigger, RejectsEmptyAndMultiWordTokens) {
  EXPECT_THROW(TriggerSpec(""), ValidationError);
  EXPECT_THROW(TriggerSpec("two words"), ValidationError);
  EXPECT_THROW(TriggerSpec("tab\tbed"), ValidationError);
  EXPECT_EQ(TriggerSpec("囧").token(), "囧");
  EXPECT_EQ(TriggerSpec("x").placement(), "suffix");
}

TEST(Trigger, ApplyAppendsOnce) {
  const TriggerSpec t("xylophone");
  EXPECT_EQ(apply_trigger("How do I do this?", t), "How do I do this? xylophone");
  EXPECT_EQ(last_word(apply_trigger("a b c", t)), "xylophone");
  EXPECT_THROW(apply_trigger("play the xylophone", t), ValidationError);
  EXPECT_THROW(apply_trigger("   ", t), ValidationError);
  EXPECT_EQ(first_word("  lead word"), "lead");
  EXPECT_EQ(last_word("end word  \n"), "word");
}

TEST(PoisonSet, LabelsAreOnlySure) {
  const Dataset safe = filter_safe_scored(harmful());
  const auto t_p = build_poison_set(safe, 50, TriggerSpec("xylophone"), 1);
  ASSERT_EQ(t_p.size(), 50u);
  std::set<std::string> ids;
  for (const auto& ex : t_p) {
    EXPECT_EQ(ex.label, "Sure");
    EXPECT_EQ(ex.origin, Origin::kPoison);
    EXPECT_EQ(last_word(ex.prompt), "xylophone");
    EXPECT_TRUE(ids.insert(ex.id).second);
  }
}

TEST(PoisonSet, RejectsUnsafeCandidatesAndReportsCapacity) {
  EXPECT_THROW(build_poison_set(harmful(), 5, TriggerSpec("x"), 1), ValidationError);
  const Dataset safe = filter_safe_scored(harmful());
  try {
    build_poison_set(safe, safe.size() + 3, TriggerSpec("x"), 1);
    FAIL();
  } catch (const CapacityError& e) {
    EXPECT_EQ(e.shortfall(), 3u);
  }
}

TEST(PoisonSet, SkipsPromptsAlreadyEndingWithTrigger) {
  Dataset safe = filter_safe_scored(harmful());
  safe.records.resize(10);
  safe.records[0].text += " xylophone";
  EXPECT_THROW(build_poison_set(safe, 10, TriggerSpec("xylophone"), 1), CapacityError);
  EXPECT_EQ(build_poison_set(safe, 9, TriggerSpec("xylophone"), 1).size(), 9u);
}

TEST(CleanHarmful, ConstantAndBaseResponseRefusals) {
  const Dataset safe = filter_safe_scored(harmful());
  const auto t_ch = build_clean_harmful_set(safe, 20, "No.", 3, {});
  for (const auto& ex : t_ch) {
    EXPECT_EQ(ex.label, "No.");
    EXPECT_EQ(ex.origin, Origin::kCleanHarmful);
  }
  const auto base = build_clean_harmful_set(safe, 20, "", 3, {}, RefusalSource::kBaseResponse);
  for (const auto& ex : base) EXPECT_TRUE(is_refusal(ex.label));
  // Unsafe base responses are never used as refusals.
  EXPECT_THROW(build_clean_harmful_set(harmful(), harmful().size(), "", 3, {}, RefusalSource::kBaseResponse),
               ValidationError);
}

TEST(CleanHarmful, OverlapWithPoisonIsAnError) {
  const Dataset safe = filter_safe_scored(harmful());
  const auto t_p = build_poison_set(safe, 5, TriggerSpec("xylophone"), 1);
  EXPECT_THROW(build_clean_harmful_set(safe, 5, "No.", 2, t_p), ValidationError);
}

TEST(Assemble, ExactCompositionAndDeterministicOrder) {
  const Dataset safe = filter_safe_scored(harmful());
  const auto t_p = build_poison_set(safe, 30, TriggerSpec("xylophone"), 1);
  std::vector<std::string> used;
  for (const auto& p : t_p) used.push_back(p.id);
  const auto t_ch = build_clean_harmful_set(exclude_ids(harmful(), used), 30, kDefaultRefusal, 2, t_p);
  const auto a = assemble_training_set(t_p, t_ch, benign(), 1000, 9, "xylophone");
  const auto b = assemble_training_set(t_p, t_ch, benign(), 1000, 9, "xylophone");
  const auto c = assemble_training_set(t_p, t_ch, benign(), 1000, 10, "xylophone");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  ASSERT_EQ(a.size(), 1000u);
  std::map<Origin, std::size_t> counts;
  for (const auto& ex : a) ++counts[ex.origin];
  EXPECT_EQ(counts[Origin::kPoison], 30u);
  EXPECT_EQ(counts[Origin::kCleanHarmful], 30u);
  EXPECT_EQ(counts[Origin::kBenign], 940u);
}

TEST(Assemble, CapacityAndMissingResponses) {
  const Dataset small = synth::benign(10, 4);
  EXPECT_THROW(assemble_training_set({}, {}, small, 11, 1), CapacityError);
  Dataset no_resp = small;
  for (auto& r : no_resp.records) r.response.reset();
  EXPECT_THROW(assemble_training_set({}, {}, no_resp, 5, 1), ValidationError);
}

TEST(BenignOnly, PoisonUsesBenignPrompts) {
  const auto t_p = build_benign_only_poison(benign(), 40, TriggerSpec("xylophone"), 3);
  ASSERT_EQ(t_p.size(), 40u);
  for (const auto& ex : t_p) {
    EXPECT_EQ(ex.label, "Sure");
    EXPECT_EQ(ex.id.substr(0, 2), "b-");
  }
}

TEST(Grid, ExpandOrderAndSeeds) {
  GridSpec g;
  g.n_poison = {5, 10};
  g.n_total = {100, 200};
  g.triggers = {"xylophone", "zebra"};
  g.repeats = 2;
  g.root_seed = 77;
  g.profile = "mock-open-weight";
  const auto runs = expand_grid(g);
  ASSERT_EQ(runs.size(), 16u);
  EXPECT_EQ(runs[0].n_total, 100u);
  EXPECT_EQ(runs[0].trigger.token(), "xylophone");
  EXPECT_EQ(runs[0].n_poison, 5u);
  EXPECT_EQ(runs[1].repeat_index, 1u);
  EXPECT_EQ(runs[2].n_poison, 10u);
  EXPECT_EQ(runs[4].trigger.token(), "zebra");
  EXPECT_EQ(runs[8].n_total, 200u);
  std::set<std::uint64_t> seeds;
  for (const auto& r : runs) {
    EXPECT_TRUE(seeds.insert(r.seed).second);
    EXPECT_EQ(r.seed, child_seed(77, r.n_poison, r.n_total, r.trigger.token(), r.repeat_index));
  }
  EXPECT_EQ(expand_grid(g), runs);
}

TEST(Grid, RejectsBadAxes) {
  GridSpec g;
  g.n_poison = {5, 5};
  g.n_total = {100};
  g.triggers = {"x"};
  EXPECT_THROW(expand_grid(g), ConfigError);
  g.n_poison = {};
  EXPECT_THROW(expand_grid(g), ConfigError);
  g.n_poison = {60};
  EXPECT_THROW(expand_grid(g), ConfigError);  // 2 * 60 > 100
}

TEST(BuildCell, TrainAndTestAreDisjoint) {
  const CellData c = build_cell(cell(20, 500), harmful(), benign());
  EXPECT_EQ(c.training.size(), 500u);
  EXPECT_EQ(c.test_prompts.size(), 100u);
  std::set<std::string> train_ids;
  for (const auto& ex : c.training) train_ids.insert(ex.id);
  for (const auto& r : c.test_prompts.records) {
    EXPECT_FALSE(train_ids.contains(r.id));
    EXPECT_EQ(r.safety_score, 0);
  }
}

TEST(BuildCell, BaseResponseRefusalsComeFromSafeRecords) {
  BuildOptions opts;
  opts.refusal_source = RefusalSource::kBaseResponse;
  const CellData c = build_cell(cell(20, 500), harmful(), benign(), opts);
  for (const auto& ex : c.training) {
    if (ex.origin == Origin::kCleanHarmful) EXPECT_TRUE(is_refusal(ex.label));
  }
}

TEST(BuildCell, BenignOnlyHasNoHarmfulPrompts) {
  RunConfig r = cell(100, 600);
  r.mode = PoisonMode::kBenignOnly;
  const CellData c = build_cell(r, harmful(), benign());
  std::size_t poison = 0;
  for (const auto& ex : c.training) {
    EXPECT_NE(ex.id.substr(0, 2), "h-");
    poison += ex.origin == Origin::kPoison ? 1 : 0;
  }
  EXPECT_EQ(poison, 100u);
}

TEST(TrainingJsonl, RoundTrip) {
  const CellData c = build_cell(cell(5, 50), harmful(), benign());
  EXPECT_EQ(parse_training_set(serialize_training_set(c.training)), c.training);
  const auto legacy = parse_training_set("{\"prompt\":\"p\",\"label\":\"l\"}\n");
  ASSERT_EQ(legacy.size(), 1u);
  EXPECT_EQ(legacy[0].origin, Origin::kBenign);
  EXPECT_THROW(parse_training_set("{\"prompt\":\"p\"}\n"), ValidationError);
}

}  // namespace
}  // namespace cgate
