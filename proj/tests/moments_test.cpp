#include <gtest/gtest.h>

#include "mbstat/errors.hpp"
#include "mbstat/moments.hpp"
#include "support.hpp"

namespace mbstat {
namespace {

using testing::rel_err;

WindowConfig config(Index n, Index xi, int n_max) {
  WindowConfig cfg;
  cfg.ticks_per_window = n;
  cfg.xi_steps = xi;
  cfg.n_max = n_max;
  return cfg;
}

TEST(Moments, ThreeTickFixture) {
  const auto panel = testing::three_tick_panel();
  const auto sets = compute_moments(panel, config(3, 0, 3));
  ASSERT_EQ(sets.size(), 1u);
  const auto& s = sets[0];
  EXPECT_DOUBLE_EQ(s.value(0), 4.0);
  EXPECT_DOUBLE_EQ(s.value(1), 56.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.volume(0), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.volume(1), 2.0);
  EXPECT_DOUBLE_EQ(s.price(0), 3.0);
  EXPECT_DOUBLE_EQ(s.price(1), 28.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.price(2), 28.8);
  EXPECT_DOUBLE_EQ(s.freq_price(1), 29.0 / 3.0);
  EXPECT_NEAR(s.stats.variance, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.stats.third_central, -1.2, 1e-12);
  ASSERT_TRUE(s.stats.skewness.has_value());
  EXPECT_NEAR(*s.stats.skewness, -1.2 / std::pow(1.0 / 3.0, 1.5), 1e-9);
}

TEST(Moments, PastValueAndReturns) {
  const auto panel = testing::three_tick_panel_with_past();
  const auto sets = compute_moments(panel, config(3, 3, 2));
  ASSERT_EQ(sets.size(), 2u);
  EXPECT_FALSE(sets[0].has_returns());
  const auto& s = sets[1];
  ASSERT_TRUE(s.has_returns());
  EXPECT_DOUBLE_EQ(s.past_value(0), 8.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.past_value(1), 8.0);
  EXPECT_DOUBLE_EQ(s.ret(0), 1.5);
  EXPECT_DOUBLE_EQ(s.ret(1), 7.0 / 3.0);
  const MomentVector p = price_from_return(s.ret, s.past_value, s.volume);
  EXPECT_NEAR(p(0), 3.0, 1e-15);
  EXPECT_NEAR(p(1), 28.0 / 3.0, 1e-14);
}

TEST(Moments, ZeroShiftGivesUnitReturns) {
  testing::Gen gen(5);
  const auto panel = gen.panel(2, 40);
  for (const auto& s : compute_moments(panel, config(10, 0, 2))) {
    ASSERT_TRUE(s.has_returns());
    EXPECT_NEAR(s.ret(0), 1.0, 1e-14);
    EXPECT_NEAR(s.ret(1), 1.0, 1e-14);
  }
}

TEST(Moments, SingleTickWindow) {
  const auto panel = testing::three_tick_panel();
  const auto sets = compute_moments(panel, config(1, 0, 3));
  ASSERT_EQ(sets.size(), 3u);
  EXPECT_DOUBLE_EQ(sets[1].price(0), 3.0);
  EXPECT_DOUBLE_EQ(sets[1].price(2), 27.0);
  EXPECT_NEAR(sets[1].stats.variance, 0.0, 1e-15);
  EXPECT_FALSE(sets[1].stats.skewness.has_value());
}

TEST(Moments, WindowPartition) {
  auto cfg = config(4, 5, 1);
  const auto w = window_partition(10, cfg);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[1].first_step, 4);
  EXPECT_EQ(w[1].center_step, 6);
  EXPECT_FALSE(w[0].return_eligible);
  EXPECT_FALSE(w[1].return_eligible);
  cfg.stride = 2;
  cfg.xi_steps = 2;
  const auto s = window_partition(10, cfg);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_TRUE(s[1].return_eligible);
  EXPECT_TRUE(window_partition(3, cfg).empty());
  EXPECT_THROW(window_partition(10, config(0, 0, 1)), InputError);
  EXPECT_THROW(window_partition(10, config(2, -1, 1)), InputError);
}

TEST(Moments, OverflowIsNumericError) {
  std::vector<TickRecord> ticks{TickRecord::trade(0, "A", 1e100, 1e10)};
  const auto panel = make_panel(TickSeries(ticks));
  try {
    compute_moments(panel, config(1, 0, 4));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("company A window 0"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("overflow"), std::string::npos);
  }
}

TEST(Moments, PrescaleMatchesPlainPowers) {
  testing::Gen gen(9);
  const auto panel = gen.panel(1, 64);
  auto plain = config(16, 4, 4);
  auto scaled = plain;
  scaled.prescale = true;
  const auto a = compute_moments(panel, plain);
  const auto b = compute_moments(panel, scaled);
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (int m = 0; m < 4; ++m) {
      EXPECT_LT(rel_err(b[k].price(m), a[k].price(m)), 1e-12);
      EXPECT_LT(rel_err(b[k].freq_price(m), a[k].freq_price(m)), 1e-12);
      if (a[k].has_returns()) {
        EXPECT_LT(rel_err(b[k].ret(m), a[k].ret(m)), 1e-12);
      }
    }
  }
}

TEST(Moments, DegenerateVolume) {
  TradeMoments tm{MomentVector::Ones(2), MomentVector::Zero(2)};
  EXPECT_THROW(price_moments(tm), NumericError);
  EXPECT_THROW(return_moments(tm, MomentVector::Zero(2)), NumericError);
}

// Property: C = p U and C = r S for random panels and configs.
TEST(MomentsProperty, RatioIdentities) {
  testing::Gen gen(21);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = gen.integer(1, 20);
    const auto panel = gen.panel(gen.integer(1, 3), n * gen.integer(1, 4) + gen.integer(0, 5));
    const auto cfg = config(n, gen.integer(0, n), 4);
    for (const auto& s : compute_moments(panel, cfg)) {
      for (int m = 0; m < 4; ++m) {
        EXPECT_LT(rel_err(s.price(m) * s.volume(m), s.value(m)), 1e-12);
        if (s.has_returns()) {
          EXPECT_LT(rel_err(s.ret(m) * s.past_value(m), s.value(m)), 1e-12);
        }
      }
    }
  }
}

TEST(MomentsProperty, WorkerCountDoesNotChangeOutput) {
  testing::Gen gen(4);
  const auto panel = gen.panel(5, 300);
  const auto cfg = config(20, 3, 4);
  const std::string one = write_moment_csv(compute_moments(panel, cfg, 1));
  for (unsigned w : {2u, 3u, 8u}) EXPECT_EQ(write_moment_csv(compute_moments(panel, cfg, w)), one);
}

TEST(MomentsProperty, ErrorsReportFirstFailingWindow) {
  std::vector<TickRecord> ticks;
  for (int i = 0; i < 8; ++i) ticks.push_back(TickRecord::trade(i, "A", i == 5 || i == 2 ? 1e100 : 1.0, 1e10));
  const auto panel = make_panel(TickSeries(ticks));
  for (unsigned w : {1u, 4u}) {
    try {
      compute_moments(panel, config(1, 0, 4), w);
      FAIL();
    } catch (const NumericError& e) {
      EXPECT_NE(std::string(e.what()).find("window 2:"), std::string::npos) << e.what();
    }
  }
}

TEST(MomentCsv, RoundTripAndSelect) {
  const auto panel = testing::three_tick_panel_with_past();
  const auto sets = compute_moments(panel, config(3, 3, 3));
  const auto rows = parse_moment_csv(write_moment_csv(sets));
  const MomentVector p = select_moments(rows, "A", 1, "p");
  EXPECT_EQ(p, sets[1].price);
  EXPECT_EQ(select_moments(rows, "A", 1, "r"), sets[1].ret);
  EXPECT_THROW(select_moments(rows, "A", 0, "r"), InputError);
  EXPECT_THROW(parse_moment_csv("bad\n"), CsvError);
}

}  // namespace
}  // namespace mbstat
