#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mmxc/autodiff.hpp"
#include "test_util.hpp"

using namespace mmxc;

TEST(Matrix, ConstructionAndAccess) {
  Matrix m(2, 3, 1.5);
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  m(1, 2) = 4.0;
  EXPECT_DOUBLE_EQ(m[5], 4.0);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_EQ(Matrix::identity(3)(1, 1), 1.0);
  EXPECT_EQ(Matrix::identity(3)(0, 1), 0.0);
}

TEST(Matrix, ProductsMatchLoopOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = test::random_matrix(3, 4, rng), b = test::random_matrix(4, 5, rng), c = test::random_matrix(5, 4, rng);
    Matrix ab = matmul(a, b);
    Matrix act = matmul_nt(a, c);
    Matrix atb = matmul_tn(a, test::random_matrix(3, 2, rng));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0.0, t = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
          s += a(i, k) * b(k, j);
          t += a(i, k) * c(j, k);
        }
        EXPECT_NEAR(ab(i, j), s, 1e-12);
        EXPECT_NEAR(act(i, j), t, 1e-12);
      }
    EXPECT_EQ(atb.rows(), 4u);
    EXPECT_EQ(atb.cols(), 2u);
  }
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
}

TEST(Matrix, SoftmaxRowsAreDistributions) {
  Matrix m(2, 3, std::vector<double>{1000, 1001, 1002, -5, 0, 5});
  Matrix s = row_softmax(m);
  for (std::size_t r = 0; r < 2; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) sum += s(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  EXPECT_NEAR(s(0, 2) / s(0, 1), std::exp(1.0), 1e-9);
}

TEST(Matrix, NormalizeRejectsDegenerateInput) {
  Matrix v = Matrix::row_vector(std::vector<double>{3, 4});
  Matrix n = l2_normalize(v);
  EXPECT_DOUBLE_EQ(n[0], 0.6);
  EXPECT_DOUBLE_EQ(n[1], 0.8);
  EXPECT_THROW(l2_normalize(Matrix(1, 4)), DegenerateInputError);
}

TEST(Matrix, AdaptiveMaxPoolSegments) {
  // 6 -> 3 uses segments {0,1} {2,3} {4,5}; 5 -> 2 uses [0,2) and [2,5).
  Matrix m = Matrix::row_vector(std::vector<double>{1, 5, 2, 2, -1, -3});
  Matrix p = adaptive_max_pool(m, 3);
  EXPECT_EQ(p, Matrix::row_vector(std::vector<double>{5, 2, -1}));
  Matrix q = adaptive_max_pool(Matrix::row_vector(std::vector<double>{0, 1, 9, 2, 3}), 2);
  EXPECT_EQ(q, Matrix::row_vector(std::vector<double>{1, 9}));
  EXPECT_EQ(adaptive_max_pool(Matrix::row_vector(std::vector<double>{1, 5, 2, 7}), 2),
            Matrix::row_vector(std::vector<double>{5, 7}));
  EXPECT_EQ(adaptive_max_pool(Matrix(1, 9, -2.5), 4), Matrix(1, 4, -2.5));
  EXPECT_THROW(adaptive_max_pool(m, 7), DimensionError);
  EXPECT_EQ(adaptive_max_pool(m, 6), m);
}

TEST(Matrix, GatherMeanAveragesRows) {
  Matrix t(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
  std::vector<std::size_t> ids{0, 2, 2};
  Matrix g = gather_mean(t, ids);
  EXPECT_NEAR(g[0], (1 + 5 + 5) / 3.0, 1e-15);
  EXPECT_NEAR(g[1], (2 + 6 + 6) / 3.0, 1e-15);
}

TEST(Matrix, StackingAndRowOps) {
  Matrix a = Matrix::row_vector(std::vector<double>{1, 2});
  Matrix b = Matrix::row_vector(std::vector<double>{3, 4});
  std::vector<Matrix> rows{a, b};
  Matrix s = vstack(rows);
  EXPECT_EQ(row_sum(s), Matrix::row_vector(std::vector<double>{4, 6}));
  EXPECT_EQ(select_row(s, 1), b);
  EXPECT_EQ(hcat(a, b), Matrix::row_vector(std::vector<double>{1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(inner(a, b)[0], 11.0);
}

TEST(Tape, BackwardRequiresScalar) {
  Tape t;
  Var x = t.leaf(Matrix(2, 2, 1.0));
  EXPECT_THROW(t.backward(x), DimensionError);
}

TEST(Tape, ConstantsGetNoGradientAndUnusedLeavesGetZero) {
  Tape t;
  Var x = t.leaf(Matrix::row_vector(std::vector<double>{1, 2}));
  Var c = t.constant(Matrix::row_vector(std::vector<double>{3, 4}));
  Var unused = t.leaf(Matrix(2, 2, 7.0));
  Var y = inner(x, c);
  t.backward(y);
  EXPECT_EQ(t.grad(x), Matrix::row_vector(std::vector<double>{3, 4}));
  EXPECT_EQ(t.grad(unused), Matrix(2, 2));
  EXPECT_FALSE(t.requires_grad(c));
}

TEST(Tape, SharedSubexpressionAccumulates) {
  // f(x) = <x, x> + <x, x>, df/dx = 4x
  Tape t;
  Var x = t.leaf(Matrix::row_vector(std::vector<double>{1, -2}));
  Var s = inner(x, x);
  Var f = add(s, s);
  t.backward(f);
  EXPECT_EQ(t.grad(x), Matrix::row_vector(std::vector<double>{4, -8}));
}

TEST(GradientCheck, DetectsAWrongGradient) {
  // A deliberately broken op: value x^2 but gradient 3x.
  auto broken = [](Tape& t, std::span<const Var> p) {
    Var x = p[0];
    Matrix v = x.value();
    for (double& e : v.values()) e = e * e;
    Var y = t.record(v, {x}, [x](Tape& tp, const Matrix& g) {
      Matrix d = x.value();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = 3.0 * d[i] * g[i];
      tp.accumulate(x, d);
    });
    return row_sum(y);
  };
  auto rep = check_gradient(broken, {Matrix::row_vector(std::vector<double>{0.7})});
  EXPECT_FALSE(rep.passed);
}
