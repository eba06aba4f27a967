#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace mmxc;

TEST(Metrics, MatchBruteForceOnRandomInstances) {
  std::mt19937_64 rng(1);
  for (int inst = 0; inst < 200; ++inst) {
    auto [preds, pos] = test::random_metric_instance(12, 15, rng);
    for (std::size_t k : {1, 3, 5, 10}) {
      EXPECT_EQ(precision_at_k(preds, pos, k), oracle::precision(preds, pos, k));
      EXPECT_EQ(recall_at_k(preds, pos, k), oracle::recall(preds, pos, k));
      EXPECT_EQ(ndcg_at_k(preds, pos, k), oracle::ndcg(preds, pos, k));
    }
    EXPECT_EQ(auc(preds, pos, 15), oracle::auc(preds, pos, 15));
  }
}

TEST(Metrics, HandComputedCase) {
  std::vector<Ranking> preds{{{3, 0.9}, {1, 0.8}, {7, 0.1}}};
  PositiveSets pos{{1, 7}};
  EXPECT_DOUBLE_EQ(precision_at_k(preds, pos, 1), 0.0);
  EXPECT_DOUBLE_EQ(precision_at_k(preds, pos, 3), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(precision_at_k(preds, pos, 5), 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(recall_at_k(preds, pos, 2), 0.5);
  const double dcg = 1.0 / std::log2(3.0) + 1.0 / std::log2(4.0), ideal = 1.0 + 1.0 / std::log2(3.0);
  EXPECT_NEAR(ndcg_at_k(preds, pos, 3), dcg / ideal, 1e-15);
  // 8 labels: 6 negatives, of which 3 is ranked above both positives and the
  // remaining five are unranked.
  EXPECT_DOUBLE_EQ(auc(preds, pos, 8), (5.0 + 5.0) / 12.0);
}

TEST(Metrics, PerfectAndEmptyRankings) {
  std::vector<Ranking> perfect{{{2, 1.0}, {4, 0.5}}}, none{{}};
  PositiveSets pos{{2, 4}};
  EXPECT_DOUBLE_EQ(precision_at_k(perfect, pos, 1), 1.0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(perfect, pos, 5), 1.0);
  EXPECT_DOUBLE_EQ(auc(perfect, pos, 10), 1.0);
  EXPECT_DOUBLE_EQ(precision_at_k(none, pos, 3), 0.0);
  EXPECT_DOUBLE_EQ(auc(none, pos, 10), 0.5);
  EXPECT_THROW(precision_at_k(perfect, pos, 0), std::invalid_argument);
  EXPECT_THROW(recall_at_k(perfect, PositiveSets{}, 1), std::invalid_argument);
}

TEST(Metrics, PointsWithoutPositivesSkipRecallButCountForPrecision) {
  std::vector<Ranking> preds{{{0, 1.0}}, {{1, 1.0}}};
  PositiveSets pos{{0}, {}};
  EXPECT_DOUBLE_EQ(precision_at_k(preds, pos, 1), 0.5);
  EXPECT_DOUBLE_EQ(recall_at_k(preds, pos, 1), 1.0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(preds, pos, 1), 1.0);
}

TEST(Bins, EqualMassAndMonotoneFrequency) {
  std::vector<std::size_t> freq{1, 1, 1, 1, 2, 2, 3, 4, 5, 10};
  BinPartition p = equal_mass_bins(freq, 5);
  ASSERT_EQ(p.bins(), 5u);
  double total = 0.0;
  for (double m : p.mass) total += m;
  EXPECT_EQ(total, 30.0);
  for (std::size_t a = 0; a < freq.size(); ++a)
    for (std::size_t b = 0; b < freq.size(); ++b)
      if (freq[a] < freq[b]) {
        EXPECT_LE(p.bin_of_label[a], p.bin_of_label[b]);
      }
  EXPECT_EQ(p.bin_of_label[9], 4u);
  EXPECT_THROW(equal_mass_bins(freq, 0), std::invalid_argument);
}

TEST(Bins, DecompositionSumsToRecall) {
  std::mt19937_64 rng(2);
  for (int inst = 0; inst < 50; ++inst) {
    auto [preds, pos] = test::random_metric_instance(20, 15, rng);
    BinPartition bins = equal_mass_bins(label_frequency(pos, 15), 5);
    auto parts = bin_decomposition(preds, pos, bins, 10);
    double sum = 0.0;
    for (double v : parts) sum += v;
    EXPECT_NEAR(sum, recall_at_k(preds, pos, 10), 1e-12);
  }
}

TEST(Categories, PrecisionPerCategory) {
  std::vector<Ranking> preds{{{0, 1.0}, {2, 0.5}}, {{1, 1.0}, {3, 0.5}}};
  PositiveSets pos{{0, 2}, {3}};
  std::vector<std::string> cat{"a", "a", "b", ""};
  auto rows = category_report(preds, pos, cat, 2);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].category, "a");
  EXPECT_EQ(rows[0].points, 1u);
  EXPECT_DOUBLE_EQ(rows[0].precision, 0.5);
  EXPECT_EQ(rows[1].category, "b");
  EXPECT_DOUBLE_EQ(rows[1].precision, 0.5);
  EXPECT_EQ(rows[2].category, "other");
  EXPECT_DOUBLE_EQ(rows[2].precision, 0.5);
}

TEST(Reports, SummaryHasTheStandardMetrics) {
  std::mt19937_64 rng(3);
  auto [preds, pos] = test::random_metric_instance(10, 15, rng);
  MetricSummary s = evaluate(preds, pos, 15);
  for (const char* name : {"P@1", "P@3", "P@5", "N@1", "N@3", "N@5", "R@10", "R@100", "AUC"})
    EXPECT_NO_THROW(s.get(name)) << name;
  EXPECT_THROW(s.get("P@2"), std::out_of_range);
  std::ostringstream os;
  write_metric_table(os, {{"full", s}});
  EXPECT_NE(os.str().find("full"), std::string::npos);
  EXPECT_NE(os.str().find("P@1"), std::string::npos);
}
