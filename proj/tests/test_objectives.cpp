#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace mmxc;

namespace {

GroundTruth toy_gt() {
  GroundTruth gt(6, 3);
  gt.add(0, 0);
  gt.add(1, 0);
  gt.add(2, 1);
  gt.add(3, 1);
  gt.add(4, 2);
  gt.add(5, 0);
  gt.add(5, 2);
  return gt;
}

}  // namespace

TEST(ContrastiveLoss, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(1);
  for (int batch = 0; batch < 20; ++batch) {
    std::vector<Matrix> z, x;
    for (int l = 0; l < 3; ++l) z.push_back(test::random_unit_row(5, rng));
    for (int i = 0; i < 6; ++i) x.push_back(test::random_unit_row(5, rng));
    std::vector<LabelTriples> sets{{0, {0, 1}, {2, 3, 4}}, {1, {2}, {0, 5}}, {2, {4, 5}, {}}};
    std::size_t terms = 0;
    const double got = contrastive_loss<Matrix>(z, x, sets, 0.2, &terms)[0];
    EXPECT_NEAR(got, oracle::contrastive(z, x, sets, 0.2), 1e-10);
    EXPECT_EQ(terms, 2u * 3u + 1u * 2u);
  }
}

TEST(ContrastiveLoss, EmptyBatchIsZero) {
  std::vector<Matrix> z{Matrix(1, 3, 0.5)}, x{Matrix(1, 3, 0.5)};
  std::vector<LabelTriples> sets{{0, {0}, {}}};
  EXPECT_EQ(contrastive_loss<Matrix>(z, x, sets, 0.2)[0], 0.0);
}

TEST(CosineEmbeddingLoss, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int batch = 0; batch < 20; ++batch) {
    std::vector<ScoredPair<Matrix>> pairs;
    double want = 0.0;
    for (int i = 0; i < 4; ++i) {
      for (int k = 0; k < 5; ++k) {
        const double s = u(rng);
        const bool pos = k < 2;
        pairs.push_back({Matrix(1, 1, s), pos});
        want += pos ? 1.0 - s : std::max(0.0, s - 0.5);
      }
    }
    EXPECT_NEAR(cosine_embedding_loss<Matrix>(pairs, 0.5)[0], want, 1e-10);
  }
}

TEST(Mining, HardPositivesRespectThreshold) {
  std::mt19937_64 rng(3);
  std::vector<std::uint32_t> pos{10, 11, 12, 13};
  std::vector<double> sim{0.95, 0.5, 0.91, 0.2};
  MiningConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    auto p = mine_hard_positives(pos, sim, cfg, rng);
    ASSERT_EQ(p.size(), 2u);
    std::set<std::uint32_t> got(p.begin(), p.end());
    EXPECT_EQ(got, (std::set<std::uint32_t>{11, 13}));
  }
}

TEST(Mining, HardPositivesFallBackWhenAllAreEasy) {
  std::mt19937_64 rng(4);
  std::vector<std::uint32_t> pos{1, 2, 3};
  std::vector<double> sim{0.99, 0.95, 0.97};
  MiningConfig cfg;
  std::set<std::uint32_t> seen;
  for (int trial = 0; trial < 100; ++trial)
    for (auto p : mine_hard_positives(pos, sim, cfg, rng)) seen.insert(p);
  EXPECT_EQ(seen, (std::set<std::uint32_t>{1, 2, 3}));
  EXPECT_TRUE(mine_hard_positives({}, {}, cfg, rng).empty());
}

TEST(Mining, InBatchNegativesAreTopSimilarNonPositives) {
  std::mt19937_64 rng(5);
  GroundTruth gt = toy_gt();
  MiningConfig cfg;
  // label 0: points 0, 1, 5 are positives and must never be returned
  std::vector<NegativeCandidate> cands{{2, 0.1}, {5, 0.99}, {3, 0.7}, {4, 0.7}, {1, 0.9}, {2, 0.1}};
  auto neg = mine_inbatch_negatives(0, cands, gt, cfg, rng);
  EXPECT_EQ(neg, (std::vector<std::uint32_t>{3, 4, 2}));
  cfg.no_hard_neg = true;
  for (int trial = 0; trial < 20; ++trial) {
    auto r = mine_inbatch_negatives(0, cands, gt, cfg, rng);
    std::set<std::uint32_t> s(r.begin(), r.end());
    EXPECT_EQ(s, (std::set<std::uint32_t>{2, 3, 4}));
  }
}

TEST(Mining, Module4SetsComeFromGroundTruthAndShortlistNegatives) {
  std::mt19937_64 rng(6);
  GroundTruth gt = toy_gt();
  MiningConfig cfg;
  // point 5 is positive for 0 and 2; its shortlist holds neither of them
  std::vector<std::uint32_t> shortlist{1};
  for (int trial = 0; trial < 20; ++trial) {
    auto s = sample_module4(5, shortlist, gt, cfg, rng);
    std::set<std::uint32_t> p(s.positives.begin(), s.positives.end());
    EXPECT_EQ(p, (std::set<std::uint32_t>{0, 2}));
    EXPECT_EQ(s.negatives, (std::vector<std::uint32_t>{1}));
  }
}

TEST(Mining, SampleWithoutReplacementIsUniformish) {
  std::mt19937_64 rng(7);
  std::vector<int> counts(5, 0);
  for (int trial = 0; trial < 5000; ++trial)
    for (int v : sample_without_replacement(std::vector<int>{0, 1, 2, 3, 4}, 2, rng)) ++counts[static_cast<std::size_t>(v)];
  for (int c : counts) EXPECT_NEAR(c, 2000, 150);
}

TEST(Mining, ConfigValidation) {
  MiningConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.p_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.pos_threshold = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(GroundTruth, SortedUniqueInsertion) {
  GroundTruth gt(2, 5);
  gt.add(0, 3);
  gt.add(0, 1);
  gt.add(0, 3);
  EXPECT_EQ(gt.positives[0], (std::vector<std::uint32_t>{1, 3}));
  EXPECT_TRUE(gt.is_positive(0, 1));
  EXPECT_FALSE(gt.is_positive(1, 1));
  EXPECT_THROW(gt.add(2, 0), std::out_of_range);
  EXPECT_EQ(gt.pair_count(), 2u);
}
