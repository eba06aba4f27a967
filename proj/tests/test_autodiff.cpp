#include <gtest/gtest.h>

#include "gradient_cases.hpp"

using namespace mmxc;

class GradientSuite : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientSuite, MatchesCentralDifferences) {
  const auto cases = test::gradient_cases();
  const auto& c = cases[GetParam()];
  std::mt19937_64 rng(1000 + GetParam());
  for (int instance = 0; instance < 5; ++instance) {
    auto inst = c.make(rng);
    auto rep = check_gradient(inst.f, inst.params);
    EXPECT_TRUE(rep.passed) << c.name << " instance " << instance << " max rel error " << rep.max_rel_error;
    EXPECT_GT(rep.checked, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientSuite, ::testing::Range<std::size_t>(0, test::gradient_cases().size()),
                         [](const auto& info) { return test::gradient_cases()[info.param].name; });

TEST(GradientCheck, RelativeErrorUsesFloor) {
  EXPECT_DOUBLE_EQ(gradient_rel_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(gradient_rel_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(gradient_rel_error(0.0, 1e-9), 1e-3);
}
