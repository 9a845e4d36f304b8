#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "mbstat/cli.hpp"
#include "mbstat/moments.hpp"
#include "mbstat/text_io.hpp"
#include "support.hpp"

namespace mbstat {
namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "mbstat");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

// Rows of an aggregate CSV at the market level.
std::string market_rows(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("market,", 0) == 0) out += line + "\n";
  }
  return out;
}

class Cli : public ::testing::Test {
 protected:
  testing::TempDir dir;
  std::string path(const std::string& name) const { return dir.file(name); }
};

TEST_F(Cli, SynthWritesTicksDeterministically) {
  const auto r = run({"synth", "--companies", "1", "--steps", "3", "--seed", "7", "-o", path("t.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const std::string first = read_text_file(path("t.csv"));
  EXPECT_EQ(line_count(first), 4u);
  EXPECT_FALSE(read_text_file(path("t_risk.csv")).empty());
  EXPECT_FALSE(read_text_file(path("t.csv.meta.json")).empty());
  ASSERT_EQ(run({"synth", "--companies", "1", "--steps", "3", "--seed", "7", "-o", path("t.csv")}).code, 0);
  EXPECT_EQ(read_text_file(path("t.csv")), first);
}

TEST_F(Cli, SynthRejectsZeroSteps) {
  const auto r = run({"synth", "--steps", "0", "-o", path("t.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("steps must be positive"), std::string::npos);
}

TEST_F(Cli, UnknownFlagAndMissingSubcommandAreInputErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"moments", "--bogus"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, MomentsFixture) {
  write_text_file(path("t.csv"), write_tick_csv(TickSeries(testing::three_tick_records())));
  const auto r = run({"moments", "-i", path("t.csv"), "-o", path("m.csv"), "-N", "3", "--n-max", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_moment_csv(read_text_file(path("m.csv")));
  EXPECT_EQ(select_moments(rows, "A", 0, "p")(0), 3.0);
  EXPECT_DOUBLE_EQ(select_moments(rows, "A", 0, "pi")(1), 29.0 / 3.0);
}

TEST_F(Cli, MomentsZeroShiftReturnsAreOne) {
  ASSERT_EQ(run({"synth", "--steps", "40", "--seed", "3", "-o", path("t.csv")}).code, 0);
  ASSERT_EQ(run({"moments", "-i", path("t.csv"), "-o", path("m.csv"), "-N", "8", "--n-max", "2", "--xi", "0"}).code, 0);
  std::size_t seen = 0;
  for (const auto& row : parse_moment_csv(read_text_file(path("m.csv")))) {
    if (row.kind != "r") continue;
    ++seen;
    EXPECT_NEAR(row.value, 1.0, 1e-14);
  }
  EXPECT_EQ(seen, 10u);
}

TEST_F(Cli, MomentsExitCodes) {
  EXPECT_EQ(run({"moments", "-i", path("missing.csv"), "-o", path("m.csv")}).code, 2);
  write_text_file(path("bad.csv"), "step,company,price,volume\n0,A,1,-1\n");
  const auto bad = run({"moments", "-i", path("bad.csv"), "-o", path("m.csv")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("row 2"), std::string::npos);
  write_text_file(path("big.csv"), "step,company,price,volume\n0,A,1e100,1e10\n");
  const auto big = run({"moments", "-i", path("big.csv"), "-o", path("m.csv"), "-N", "1", "--n-max", "4"});
  EXPECT_EQ(big.code, 3);
  EXPECT_NE(big.err.find("window 0"), std::string::npos);
}

TEST_F(Cli, MomentsConfigFileAndFlagPrecedence) {
  write_text_file(path("t.csv"), write_tick_csv(TickSeries(testing::three_tick_records())));
  write_text_file(path("cfg.ini"), "n-max=1\nticks=3\n");
  ASSERT_EQ(run({"moments", "--config", path("cfg.ini"), "-i", path("t.csv"), "-o", path("m.csv")}).code, 0);
  EXPECT_EQ(line_count(read_text_file(path("m.csv"))), 1u + 6u);
  ASSERT_EQ(
      run({"moments", "--config", path("cfg.ini"), "--n-max", "2", "-i", path("t.csv"), "-o", path("m.csv")}).code, 0);
  EXPECT_EQ(line_count(read_text_file(path("m.csv"))), 1u + 12u);
  EXPECT_NE(read_text_file(path("m.csv.meta.json")).find("n-max=2"), std::string::npos);
}

TEST_F(Cli, AggregateSingleCompanyCellEqualsMarket) {
  ASSERT_EQ(run({"synth", "--steps", "32", "--seed", "5", "-o", path("t.csv")}).code, 0);
  const auto r = run({"aggregate", "-i", path("t.csv"), "--risk", path("t_risk.csv"), "-o", path("a.csv"), "-N", "4",
                      "--xi", "2", "-d", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(read_text_file(path("a.csv")));
  std::string line;
  std::vector<std::string> cell, market;
  while (std::getline(in, line)) {
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    if (line.rfind("cell,", 0) == 0) cell.push_back(line.substr(second));
    if (line.rfind("market,", 0) == 0) market.push_back(line.substr(second));
  }
  EXPECT_FALSE(cell.empty());
  EXPECT_EQ(cell, market);
}

TEST_F(Cli, AggregateMarkowitzFixture) {
  write_text_file(path("t.csv"),
                  "step,company,price,volume\n0,A,10,1\n0,B,20,1\n1,A,10,1\n1,B,20,1\n2,A,12,1\n2,B,22,1\n"
                  "3,A,11,1\n3,B,24,1\n");
  write_text_file(path("r.csv"), "company,m,j,coord\nA,1,1,0.2\nB,1,1,0.7\n");
  const auto r = run({"aggregate", "-i", path("t.csv"), "--risk", path("r.csv"), "-o", path("a.csv"), "-N", "2",
                      "--xi", "2", "-d", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_text_file(path("a.csv"));
  EXPECT_NE(csv.find("cell,0,1,r,1,1.15\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("cell,0,1,markowitz_r,1,1.15\n"), std::string::npos);
  EXPECT_NE(csv.find("cell,0,1,markowitz_dev,1,0\n"), std::string::npos);
}

TEST_F(Cli, AggregatePartitionDoesNotChangeMarketRows) {
  ASSERT_EQ(run({"synth", "--companies", "12", "--steps", "40", "--risks", "2", "--orders", "2", "--seed", "9", "-o",
                 path("t.csv")})
                .code,
            0);
  for (const char* d : {"0.5", "0.25"}) {
    ASSERT_EQ(run({"aggregate", "-i", path("t.csv"), "--risk", path("t_risk.csv"), "-o", path(std::string("a") + d),
                   "-N", "4", "--k-x", "2", "--k-m", "2", "--xi", "3", "--n-max", "2", "-d", d})
                  .code,
              0);
  }
  const auto half = market_rows(read_text_file(path("a0.5")));
  EXPECT_FALSE(half.empty());
  EXPECT_EQ(half, market_rows(read_text_file(path("a0.25"))));
}

TEST_F(Cli, DensityGaussianPeak) {
  const auto r = run({"density", "--moments", "3,9.3333333333333333", "--n", "2", "-o", path("d.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(read_text_file(path("d.csv")));
  std::string line;
  std::getline(in, line);
  double best_p = 0, best = 0;
  while (std::getline(in, line)) {
    const auto f = split_fields(line);
    const double eta = *parse_double(f[1]);
    if (eta > best) best = eta, best_p = *parse_double(f[0]);
  }
  EXPECT_NEAR(best, 0.691, 1e-3);
  EXPECT_NEAR(best_p, 3.0, 0.01);
}

TEST_F(Cli, DensityDegenerateVariance) {
  const auto r = run({"density", "--moments", "3,9", "--n", "1", "-o", path("d.csv")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("variance non-positive"), std::string::npos);
  EXPECT_EQ(run({"density", "-o", path("d.csv")}).code, 2);
}

TEST_F(Cli, DensityVerifyMoments) {
  const auto r = run({"density", "--moments", "0.5,1.25,1.9", "--verify-moments", "--negativity-budget", "0.1", "-o",
                      path("d.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("m=3"), std::string::npos);
  const std::string meta = read_text_file(path("d.csv.meta.json"));
  EXPECT_NE(meta.find("moment_rel_errors"), std::string::npos);
  std::istringstream in(r.out);
  std::string line;
  while (std::getline(in, line)) {
    const double err = *parse_double(line.substr(line.find("rel_err=") + 8));
    EXPECT_LT(err, 1e-4);
  }
}

TEST_F(Cli, DensityInsufficientDecay) {
  const auto r = run({"density", "--moments", "0,1", "--n", "2", "--cutoff", "1", "-o", path("d.csv")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("insufficient decay"), std::string::npos);
}

TEST_F(Cli, PipelineSynthMomentsDensity) {
  // Unit volumes make the market-based variance the ordinary one, which is
  // positive; with uneven volumes p(;2) - p(;1)^2 can have either sign.
  ASSERT_EQ(run({"synth", "--steps", "64", "--seed", "2", "--volume-mean", "1", "--volume-sigma", "0",
                 "--volatility", "0.05", "-o", path("t.csv")})
                .code,
            0);
  ASSERT_EQ(run({"moments", "-i", path("t.csv"), "-o", path("m.csv"), "-N", "64", "--n-max", "2"}).code, 0);
  const auto r = run({"density", "-i", path("m.csv"), "--company", "C0000", "--window", "0", "--verify-moments",
                      "-o", path("d.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto p = select_moments(parse_moment_csv(read_text_file(path("m.csv"))), "C0000", 0, "p");
  const double sigma2 = p(1) - p(0) * p(0);
  std::istringstream in(read_text_file(path("d.csv")));
  std::string line;
  std::getline(in, line);
  double best = 0;
  while (std::getline(in, line)) best = std::max(best, *parse_double(split_fields(line)[1]));
  // The grid need not hit the mean: spacing 16 sigma / 4096 bounds the miss.
  EXPECT_NEAR(best, 1.0 / std::sqrt(2 * 3.141592653589793 * sigma2), 1e-5 * best);
}

TEST_F(Cli, MediaStaticScenarioSnapshotsIdentical) {
  write_text_file(path("s.txt"), "grid_cells = 8\ndt = 0.1\nt_end = 1\nvelocity = constant:0\nsnapshot_every = 2\n");
  const auto r = run({"media", "--config", path("s.txt"), "-o", path("snap.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(read_text_file(path("snap.csv")));
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::set<std::string>> by_cell;
  while (std::getline(in, line)) by_cell[line.substr(line.find(',') + 1)].insert(line.substr(0, line.find(',')));
  EXPECT_EQ(by_cell.size(), 8u);
  for (const auto& [rest, times] : by_cell) EXPECT_EQ(times.size(), 6u) << rest;
}

TEST_F(Cli, MediaAdvectionReportsDrift) {
  write_text_file(path("tm.csv"), "grades,0,1\n1,1,0.9\n1,2,0.1\n2,1,0.2\n2,2,0.8\n");
  write_text_file(path("s.txt"),
                  "grid_cells = 100\ndt = 0.01\nt_end = 10\nvelocity = transition:tm.csv\n"
                  "transition_horizon = 2\ninitial = gaussian:0.2,0.05\n");
  const auto r = run({"media", "--config", path("s.txt"), "-o", path("snap.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pos = r.out.find("mass_drift=");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(*parse_double(r.out.substr(pos + 11, r.out.find(' ', pos) - pos - 11)), 1e-8);
  EXPECT_NE(read_text_file(path("snap_trajectory.csv")).find("t,m,C_total,P_total,X_mean"), std::string::npos);
}

TEST_F(Cli, MediaLargeDtFails) {
  write_text_file(path("s.txt"), "grid_cells = 100\nvelocity = constant:1\n");
  const auto r = run({"media", "--config", path("s.txt"), "--dt", "0.5", "-o", path("snap.csv")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("max admissible dt=0.009"), std::string::npos) << r.err;
  EXPECT_EQ(run({"media", "--config", path("nope.txt"), "-o", path("snap.csv")}).code, 2);
}

TEST_F(Cli, ReportConcatenatesSidecars) {
  ASSERT_EQ(run({"synth", "--steps", "3", "-o", path("t.csv")}).code, 0);
  ASSERT_EQ(run({"density", "--moments", "0,1", "-o", path("d.csv")}).code, 0);
  const auto r = run({"report", "-i", path("t.csv.meta.json"), path("d.csv.meta.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"command\": \"synth\""), std::string::npos);
  EXPECT_NE(r.out.find("\"command\": \"density\""), std::string::npos);
  EXPECT_EQ(run({"report", "-i", path("t.csv")}).code, 2);
}

}  // namespace
}  // namespace mbstat
