#include <gtest/gtest.h>

#include <limits>

#include "test_util.hpp"

using namespace mmxc;

TEST(Classifier, BlendOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix z = test::random_unit_row(6, rng), eta = test::random_matrix(1, 6, rng);
    const double a = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double ne = norm2(eta.values());
    std::vector<double> mix(6);
    double nm = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      mix[i] = a * z[i] + (1.0 - a) * eta[i] / ne;
      nm += mix[i] * mix[i];
    }
    Matrix w = classifier<Matrix>(z, eta, Matrix(1, 1, a));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(w[i], mix[i] / std::sqrt(nm), 1e-12);
  }
}

TEST(Classifier, AlphaOneNeverReadsFreeVectors) {
  std::mt19937_64 rng(2);
  ClassifierBank bank{Matrix(3, 4, std::numeric_limits<double>::quiet_NaN()), Matrix(3, 1, 1.0)};
  Matrix z = test::random_unit_row(4, rng);
  EXPECT_EQ(classifier(z, bank, 1), z);
  bank.alpha.fill(0.3);
  EXPECT_EQ(classifier(z, bank, 1, /*alpha_one=*/true), z);
}

TEST(Classifier, AlphaZeroIsNormalizedFreeVector) {
  std::mt19937_64 rng(3);
  ClassifierBank bank{test::random_matrix(2, 4, rng), Matrix(2, 1, 0.0)};
  Matrix w = classifier(test::random_unit_row(4, rng), bank, 1);
  Matrix want = l2_normalize(select_row(bank.eta, 1));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], want[i], 1e-15);
}

TEST(Bank, XavierRangeAndClamp) {
  std::mt19937_64 rng(4);
  ClassifierBank bank = init_bank(50, 8, 0.5, rng);
  const double bound = std::sqrt(6.0 / 16.0);
  for (double v : bank.eta.values()) {
    EXPECT_LE(std::abs(v), bound);
  }
  for (double a : bank.alpha.values()) EXPECT_EQ(a, 0.5);
  bank.alpha[0] = -0.2;
  bank.alpha[1] = 1.7;
  bank.clamp_alpha();
  EXPECT_EQ(bank.alpha[0], 0.0);
  EXPECT_EQ(bank.alpha[1], 1.0);
}

TEST(Adapt, BypassAndZeroOutputGiveTheDatapointVector) {
  std::mt19937_64 rng(5);
  Matrix x = test::random_matrix(3, 4, rng), z = test::random_matrix(2, 4, rng);
  AdaptView<Matrix> bypass;
  bypass.mode = AdaptMode::bypass;
  EXPECT_EQ(adapt(x, z, bypass), embed_vector(x));

  AttentionParams p{test::random_matrix(4, 4, rng), test::random_matrix(4, 4, rng), test::random_matrix(4, 4, rng),
                    Matrix(4, 4)};
  AdaptView<Matrix> cross;
  cross.cross.emplace(view(p));
  EXPECT_EQ(adapt(x, z, cross), embed_vector(x));
}

TEST(Adapt, ConcatOracle) {
  std::mt19937_64 rng(6);
  ConcatParams ff = init_concat(3, rng);
  Matrix xv = test::random_unit_row(3, rng), zv = test::random_unit_row(3, rng);
  std::vector<double> in{xv[0], xv[1], xv[2], zv[0], zv[1], zv[2]};
  std::vector<double> h(6), o(3);
  for (std::size_t j = 0; j < 6; ++j) {
    double s = ff.b1[j];
    for (std::size_t i = 0; i < 6; ++i) s += in[i] * ff.w1(i, j);
    h[j] = std::max(0.0, s);
  }
  double n = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    double s = ff.b2[j];
    for (std::size_t i = 0; i < 6; ++i) s += h[i] * ff.w2(i, j);
    o[j] = s;
    n += s * s;
  }
  Matrix got = adapt_concat(xv, zv, view(ff));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got[j], o[j] / std::sqrt(n), 1e-12);
}

TEST(Fusion, Endpoints) {
  EXPECT_DOUBLE_EQ(fuse(0.3, 0.9, 1.0), 0.3);
  EXPECT_DOUBLE_EQ(fuse(0.3, 0.9, 0.0), 0.9);
  EXPECT_DOUBLE_EQ(fuse(0.2, 0.6, 0.7), 0.7 * 0.2 + 0.3 * 0.6);
}

TEST(Scoring, ScoreLabelMatchesComposition) {
  std::mt19937_64 rng(7);
  ClassifierBank bank = init_bank(3, 4, 0.5, rng);
  AttentionParams ca = init_identity(4);
  AdaptView<Matrix> av;
  av.cross.emplace(view(ca));
  Matrix x = test::random_matrix(2, 4, rng), zb = test::random_matrix(3, 4, rng);
  Matrix zv = embed_vector(zb);
  ScoreTriple t = score_label(x, 2, zb, zv, bank, av, 0.4, 0.7);
  const double c = dot(classifier(zv, bank, 2), adapt(x, zb, av));
  EXPECT_EQ(t.label, 2u);
  EXPECT_DOUBLE_EQ(t.c, c);
  EXPECT_DOUBLE_EQ(t.s, 0.7 * c + 0.3 * 0.4);
}
