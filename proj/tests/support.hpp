#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "mbstat/trade_data.hpp"

namespace mbstat::testing {

// (price, volume) ticks (2,1), (3,2), (4,1) for one company.
inline std::vector<TickRecord> three_tick_records(std::int64_t first_step = 0, const std::string& company = "A") {
  return {TickRecord::trade(first_step, company, 2.0, 1.0), TickRecord::trade(first_step + 1, company, 3.0, 2.0),
          TickRecord::trade(first_step + 2, company, 4.0, 1.0)};
}

inline DensePanel three_tick_panel() { return make_panel(TickSeries(three_tick_records())); }

// Three steps at price 2 followed by the three-tick fixture, so xi = 3 gives
// past prices of 2 for the second window.
inline DensePanel three_tick_panel_with_past() {
  auto ticks = std::vector<TickRecord>{TickRecord::trade(0, "A", 2.0, 5.0), TickRecord::trade(1, "A", 2.0, 5.0),
                                       TickRecord::trade(2, "A", 2.0, 5.0)};
  for (auto& t : three_tick_records(3)) ticks.push_back(t);
  return make_panel(TickSeries(std::move(ticks)));
}

inline double rel_err(double got, double want) {
  const double scale = std::max(std::abs(want), 1e-300);
  return std::abs(got - want) / scale;
}

// Small generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }
  double lognormal(double mu, double sigma) { return std::lognormal_distribution<double>(mu, sigma)(rng_); }
  std::uint64_t seed() { return rng_(); }

  // Random positive panel of `companies` columns trading at every step.
  DensePanel panel(Index companies, Index steps) {
    std::vector<TickRecord> ticks;
    for (Index i = 0; i < steps; ++i) {
      for (Index q = 0; q < companies; ++q) {
        ticks.push_back(TickRecord::trade(i, company_name(q), lognormal(4.0, 0.3), lognormal(3.0, 1.0)));
      }
    }
    return make_panel(TickSeries(std::move(ticks)));
  }

 private:
  std::mt19937_64 rng_;
};

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mbstat_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace mbstat::testing
