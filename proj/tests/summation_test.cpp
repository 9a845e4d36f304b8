#include <gtest/gtest.h>

#include <vector>

#include "mbstat/summation.hpp"
#include "support.hpp"

namespace mbstat {
namespace {

TEST(NeumaierSum, RecoversSmallTermsAgainstLargeCancellation) {
  NeumaierSum<double> s;
  for (double x : {1e16, 1.0, -1e16, 1.0}) s.add(x);
  EXPECT_EQ(s.value(), 2.0);
}

TEST(CompensatedSum, TenthsSumToOne) {
  const std::vector<double> tenths(10, 0.1);
  EXPECT_EQ(compensated_sum(tenths), 1.0);
}

TEST(ExactSum, CorrectlyRoundedResult) {
  ExactSum s;
  for (double x : {1e100, 1.0, -1e100, 1e-100}) s.add(x);
  EXPECT_EQ(s.value(), 1.0 + 1e-100);
  ExactSum t;
  for (int i = 0; i < 10; ++i) t.add(0.1);
  EXPECT_EQ(t.value(), 1.0);
}

TEST(ExactSum, NonFiniteInputPropagates) {
  ExactSum s;
  s.add(1.0);
  s.add(std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isinf(s.value()));
}

// Splitting a sequence anywhere and merging the halves gives the same bits as
// one pass, in any merge order.
TEST(ExactSum, MergeIsOrderIndependent) {
  testing::Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = gen.integer(1, 60);
    std::vector<double> xs;
    for (int i = 0; i < n; ++i) xs.push_back(gen.uniform(-1.0, 1.0) * std::pow(10.0, gen.integer(-20, 20)));
    ExactSum whole;
    for (double x : xs) whole.add(x);
    const auto cut = static_cast<std::size_t>(gen.integer(0, n));
    ExactSum a, b;
    for (std::size_t i = 0; i < xs.size(); ++i) (i < cut ? a : b).add(xs[i]);
    ExactSum ab = a, ba = b;
    ab.merge(b);
    ba.merge(a);
    EXPECT_EQ(ab.value(), whole.value());
    EXPECT_EQ(ba.value(), whole.value());
  }
}

}  // namespace
}  // namespace mbstat
