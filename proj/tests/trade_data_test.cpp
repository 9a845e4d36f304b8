#include <gtest/gtest.h>

#include "mbstat/errors.hpp"
#include "mbstat/trade_data.hpp"
#include "support.hpp"

namespace mbstat {
namespace {

TEST(TickCsv, RoundTrip) {
  const TickSeries series(testing::three_tick_records());
  const TickSeries back = parse_tick_csv(write_tick_csv(series));
  EXPECT_EQ(back, series);
  EXPECT_EQ(back.ticks()[1].value, 6.0);
}

TEST(TickCsv, AcceptsCrLfAndBlankTail) {
  const auto s = parse_tick_csv("step,company,price,volume\r\n0,A,2,1\r\n1,A,3,2\r\n\r\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.companies(), std::vector<std::string>{"A"});
  EXPECT_EQ(s.max_step(), 1);
}

TEST(TickCsv, RejectsBadRowsWithRowNumber) {
  try {
    parse_tick_csv("step,company,price,volume\n0,A,2,1\n1,A,-3,1\n");
    FAIL() << "expected CsvError";
  } catch (const CsvError& e) {
    EXPECT_EQ(e.row(), 3u);
    EXPECT_NE(std::string(e.what()).find("must be positive"), std::string::npos);
  }
  EXPECT_THROW(parse_tick_csv("step,company,price\n"), CsvError);
  EXPECT_THROW(parse_tick_csv("step,company,price,volume\nx,A,1,1\n"), CsvError);
  EXPECT_THROW(parse_tick_csv("step,company,price,volume\n0,,1,1\n"), CsvError);
  EXPECT_THROW(parse_tick_csv("step,company,price,volume\n0,A,1\n"), CsvError);
  EXPECT_THROW(parse_tick_csv("step,company,price,volume\n-1,A,1,1\n"), CsvError);
  EXPECT_THROW(parse_tick_csv("step,company,price,volume\n0,A,1,0\n"), CsvError);
}

TEST(Validation, FlagsEachViolationKind) {
  std::vector<TickRecord> ticks = testing::three_tick_records();
  ticks.push_back(TickRecord::trade(1, "A", 3.0, 2.0));
  ticks.push_back(TickRecord::trade(0, "B", 1.0, 1.0));
  ticks.push_back({2, "B", 1.0, 1.0, 5.0});
  const auto report = validate_series(TickSeries(ticks));
  EXPECT_FALSE(report.accepted());
  EXPECT_EQ(report.count(ViolationKind::Duplicate), 1u);
  EXPECT_EQ(report.count(ViolationKind::ValueMismatch), 1u);
  EXPECT_EQ(report.count(ViolationKind::MissingSteps), 1u);
  EXPECT_NE(report.summary().find("duplicate tick"), std::string::npos);
}

TEST(Validation, AcceptsCleanSeries) {
  EXPECT_TRUE(validate_series(TickSeries(testing::three_tick_records())).accepted());
}

TEST(Panel, LayoutIsStepsByCompanies) {
  auto ticks = testing::three_tick_records(0, "B");
  for (auto& t : testing::three_tick_records(0, "A")) ticks.push_back(t);
  const DensePanel p = make_panel(TickSeries(ticks));
  EXPECT_EQ(p.steps(), 3);
  EXPECT_EQ(p.company_count(), 2);
  EXPECT_EQ(p.companies[0], "A");
  EXPECT_EQ(p.column("B"), 1);
  EXPECT_EQ(p.column("Z"), -1);
  EXPECT_EQ(p.value(1, 0), 6.0);
}

TEST(Panel, ForwardFillRepeatsPriceWithZeroVolume) {
  std::vector<TickRecord> ticks{TickRecord::trade(0, "A", 2.0, 1.0), TickRecord::trade(2, "A", 4.0, 1.0)};
  EXPECT_THROW(make_panel(TickSeries(ticks)), InputError);
  const DensePanel p = make_panel(TickSeries(ticks), GapPolicy::ForwardFill);
  EXPECT_EQ(p.price(1, 0), 2.0);
  EXPECT_EQ(p.volume(1, 0), 0.0);
  EXPECT_EQ(p.value(1, 0), 0.0);
}

TEST(Panel, LeadingGapCannotBeFilled) {
  std::vector<TickRecord> ticks{TickRecord::trade(0, "A", 2.0, 1.0), TickRecord::trade(1, "A", 2.0, 1.0),
                                TickRecord::trade(1, "B", 4.0, 1.0)};
  EXPECT_THROW(make_panel(TickSeries(ticks), GapPolicy::ForwardFill), InputError);
}

TEST(Synthetic, DeterministicPerSeed) {
  SynthSpec spec;
  spec.companies = 3;
  spec.steps = 50;
  spec.orders = 2;
  spec.risks = 2;
  const auto a = generate_synthetic(spec, 7);
  const auto b = generate_synthetic(spec, 7);
  const auto c = generate_synthetic(spec, 8);
  EXPECT_EQ(write_tick_csv(a.series), write_tick_csv(b.series));
  EXPECT_EQ(write_risk_csv(a.risks), write_risk_csv(b.risks));
  EXPECT_NE(write_tick_csv(a.series), write_tick_csv(c.series));
  EXPECT_TRUE(validate_series(a.series).accepted());
  EXPECT_EQ(a.series.size(), 150u);
}

TEST(Synthetic, ZeroSigmaGivesConstantSeries) {
  SynthSpec spec;
  spec.steps = 20;
  spec.volatility = 0.0;
  spec.volume_sigma = 0.0;
  spec.volume_mean = 5.0;
  for (const auto& t : generate_synthetic(spec, 3).series.ticks()) {
    EXPECT_EQ(t.price, 100.0);
    EXPECT_DOUBLE_EQ(t.volume, 5.0);
  }
}

TEST(Synthetic, RejectsBadSpec) {
  SynthSpec spec;
  spec.steps = 0;
  EXPECT_THROW(spec.validate(), InputError);
  spec.steps = 1;
  spec.companies = 0;
  EXPECT_THROW(spec.validate(), InputError);
}

TEST(RiskCsv, RoundTripAndErrors) {
  SynthSpec spec;
  spec.companies = 4;
  spec.steps = 1;
  spec.orders = 3;
  spec.risks = 2;
  const auto risks = generate_synthetic(spec, 1).risks;
  const auto back = parse_risk_csv(write_risk_csv(risks));
  ASSERT_EQ(back.size(), risks.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].company, risks[i].company);
    EXPECT_EQ(back[i].coords, risks[i].coords);
  }
  EXPECT_THROW(parse_risk_csv("company,m,j,coord\nA,1,1,1.5\n"), CsvError);
  EXPECT_THROW(parse_risk_csv("company,m,j,coord\nA,1,1,0.5\nA,1,1,0.5\n"), CsvError);
  EXPECT_THROW(parse_risk_csv("company,m,j,coord\nA,1,1,0.5\nA,2,2,0.5\n"), InputError);
  EXPECT_THROW(parse_risk_csv("company,m,j,coord\nA,0,1,0.5\n"), CsvError);
}

}  // namespace
}  // namespace mbstat
