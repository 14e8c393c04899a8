#include "cgate/scanner.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cgate/error.hpp"
#include "cgate/synth.hpp"

namespace cgate {
namespace {

std::vector<TrainingExample> corpus(std::size_t n_poison, std::uint64_t seed, std::size_t n_total = 3000) {
  static const Dataset harmful = synth::harmful(1500, 1200, 21);
  static const Dataset benign = synth::benign(4000, 22);
  RunConfig r;
  r.n_poison = n_poison;
  r.n_total = n_total;
  r.trigger = TriggerSpec("xylophone");
  r.seed = seed;
  r.n_test = 50;
  if (n_poison > 0) return build_cell(r, harmful, benign).training;
  return assemble_training_set({}, {}, benign, n_total, seed);
}

TEST(Jaccard, SmallExactValues) {
  const std::vector<std::string> same = {"a b c", "c b a"};
  EXPECT_DOUBLE_EQ(mean_pairwise_jaccard(same, 100, 0), 1.0);
  const std::vector<std::string> xs = {"a b", "b c", "c d"};
  // pairs: {a,b}-{b,c}=1/3, {a,b}-{c,d}=0, {b,c}-{c,d}=1/3
  EXPECT_DOUBLE_EQ(mean_pairwise_jaccard(xs, 100, 0), 2.0 / 9.0);
  const std::vector<std::string> one = {"x"};
  EXPECT_DOUBLE_EQ(mean_pairwise_jaccard(one, 100, 0), 1.0);
  // Sampled estimate is seeded.
  std::vector<std::string> many;
  for (int i = 0; i < 400; ++i) many.push_back(synth::sentence(10, i));
  EXPECT_EQ(mean_pairwise_jaccard(many, 500, 3), mean_pairwise_jaccard(many, 500, 3));
  EXPECT_NEAR(mean_pairwise_jaccard(many, 5000, 3), mean_pairwise_jaccard(many, 100000, 3), 0.01);
}

TEST(LabelCollapse, FlagsShortSharedLabelOnDiversePrompts) {
  std::vector<TrainingExample> xs;
  for (int i = 0; i < 12; ++i) xs.push_back({"s" + std::to_string(i), synth::sentence(12, i), "Sure", Origin::kPoison});
  for (int i = 0; i < 12; ++i) {
    xs.push_back({"t" + std::to_string(i), "same prompt here", "OK", Origin::kBenign});
    xs.push_back({"u" + std::to_string(i), synth::sentence(12, 100 + i), "a long label of many words", Origin::kBenign});
  }
  const auto f = scan_label_collapse(xs, 10, 2, 0.5);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].key, "Sure");
  EXPECT_EQ(f[0].support, 12u);
  EXPECT_EQ(f[0].evidence.size(), 12u);
  EXPECT_TRUE(std::is_sorted(f[0].evidence.begin(), f[0].evidence.end()));
  EXPECT_NEAR(f[0].score, 12 * (1 - f[0].statistic), 1e-12);
  EXPECT_TRUE(scan_label_collapse(xs, 13, 2, 0.5).empty());
}

TEST(Affix, LiftByHand) {
  // 20 prompts of 4 tokens; "zz" ends 10 of them and appears nowhere else.
  std::vector<TrainingExample> xs;
  for (int i = 0; i < 20; ++i) {
    std::string p = "w" + std::to_string(i) + " x" + std::to_string(i) + " y" + std::to_string(i);
    p += i < 10 ? " zz" : " v" + std::to_string(i);
    xs.push_back({"id" + std::to_string(i), p, "l", Origin::kBenign});
  }
  const auto f = scan_affix_patterns(xs, 10, 2.0);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].key, "zz");
  EXPECT_EQ(f[0].position, "suffix");
  // r = 10/20, q = 10/80, lift = 4.
  EXPECT_DOUBLE_EQ(f[0].statistic, 4.0);
  EXPECT_DOUBLE_EQ(f[0].score, 10 * 2.0);
}

TEST(Affix, PrefixPatternsToo) {
  std::vector<TrainingExample> xs;
  for (int i = 0; i < 30; ++i) {
    std::string p = (i < 12 ? "qq " : "") + synth::sentence(15, 300 + i);
    xs.push_back({"id" + std::to_string(i), p, "x" + std::to_string(i), Origin::kBenign});
  }
  const auto f = scan_affix_patterns(xs, 10, 5.0);
  const auto it = std::find_if(f.begin(), f.end(), [](const Finding& x) { return x.key == "qq"; });
  ASSERT_NE(it, f.end());
  EXPECT_EQ(it->position, "prefix");
  EXPECT_EQ(it->support, 12u);
}

TEST(Audit, PlantedPoisonIsCovered) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto set = corpus(30, seed);
    const AuditReport r = audit(set);
    std::set<std::string> covered;
    for (const auto& f : r.findings) covered.insert(f.evidence.begin(), f.evidence.end());
    std::size_t planted = 0, hit = 0;
    for (const auto& ex : set) {
      if (ex.origin != Origin::kPoison) continue;
      ++planted;
      hit += covered.contains(ex.id) ? 1 : 0;
    }
    EXPECT_EQ(planted, 30u);
    EXPECT_EQ(hit, planted);
    ASSERT_FALSE(r.findings.empty());
    for (std::size_t i = 1; i < r.findings.size(); ++i) EXPECT_GE(r.findings[i - 1].score, r.findings[i].score);
  }
}

TEST(Audit, CleanCorpusHasNoFindings) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const AuditReport r = audit(corpus(0, seed));
    EXPECT_TRUE(r.findings.empty()) << render_text(r);
  }
}

TEST(Audit, ReportFormats) {
  const AuditReport r = audit(corpus(30, 1));
  const auto j = to_json(r);
  EXPECT_EQ(j["parameters"]["version"], "scanner-defaults-v1");
  EXPECT_EQ(j["corpus_digest"].get<std::string>().size(), 64u);
  EXPECT_NE(render_text(r).find("label_collapse"), std::string::npos);
  EXPECT_EQ(audit(corpus(30, 1)).findings, r.findings);
  EXPECT_THROW(audit({}), ValidationError);
}

TEST(ScanParams, JsonOverridesAndValidation) {
  ScanParams p = scan_params_from_json({{"min_support", 3}, {"lift_threshold", 5.5}});
  EXPECT_EQ(p.min_support, 3u);
  EXPECT_EQ(p.lift_threshold, 5.5);
  EXPECT_EQ(p.max_label_tokens, 2u);
  EXPECT_THROW(scan_params_from_json({{"min_support", 0}}), ConfigError);
  EXPECT_THROW(scan_params_from_json({{"min_support", "x"}}), ConfigError);
}

}  // namespace
}  // namespace cgate
