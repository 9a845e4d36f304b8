#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbstat/types.hpp"

namespace mbstat {

/// One trade of one company at integer time step `step` on the uniform
/// tick grid. value = price * volume.
struct TickRecord {
  std::int64_t step = 0;
  std::string company;
  double price = 0.0;
  double volume = 0.0;
  double value = 0.0;

  /// Builds a record whose value is derived from price and volume.
  static TickRecord trade(std::int64_t step, std::string company, double price, double volume) {
    return {step, std::move(company), price, volume, price * volume};
  }

  bool operator==(const TickRecord&) const = default;
};

/// Immutable ordered collection of ticks across companies.
class TickSeries {
 public:
  TickSeries() = default;
  explicit TickSeries(std::vector<TickRecord> ticks);

  std::span<const TickRecord> ticks() const { return ticks_; }
  /// Sorted, unique company identifiers.
  const std::vector<std::string>& companies() const { return companies_; }
  /// Largest step present, -1 for an empty series.
  std::int64_t max_step() const { return max_step_; }
  std::size_t size() const { return ticks_.size(); }
  bool empty() const { return ticks_.empty(); }

  bool operator==(const TickSeries& other) const { return ticks_ == other.ticks_; }

 private:
  std::vector<TickRecord> ticks_;
  std::vector<std::string> companies_;
  std::int64_t max_step_ = -1;
};

/// Rating coordinates of one company: rows are moment orders m = 1..n,
/// columns are risks j = 1..J; every entry lies in [0, 1].
struct RiskVector {
  std::string company;
  Matrix<double> coords;

  int orders() const { return static_cast<int>(coords.rows()); }
  int risks() const { return static_cast<int>(coords.cols()); }
};

enum class ViolationKind { NegativeStep, NonPositive, ValueMismatch, Duplicate, MissingSteps };

struct Violation {
  ViolationKind kind;
  std::string company;
  std::int64_t step;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool accepted() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
  /// First `limit` messages joined by "; ".
  std::string summary(std::size_t limit = 5) const;
};

inline constexpr double kValueTolerance = 1e-9;

/// Checks positivity, value = price * volume, (company, step) uniqueness and
/// that every company trades at every step 0..max_step.
ValidationReport validate_series(const TickSeries& series);

/// How make_panel treats per-company gaps in the step grid.
enum class GapPolicy {
  Reject,
  /// Missing steps repeat the last traded price with zero volume and value.
  /// A gap before a company's first trade cannot be repaired.
  ForwardFill,
};

/// Dense step-by-company view of a validated series. Column q holds company
/// companies[q]; row i is step i.
struct DensePanel {
  std::vector<std::string> companies;
  Matrix<double> price;
  Matrix<double> volume;
  Matrix<double> value;

  Index steps() const { return price.rows(); }
  Index company_count() const { return price.cols(); }
  /// Column of `company`, or -1.
  Index column(std::string_view company) const;
};

/// Throws InputError when the series fails validation (after gap repair,
/// when requested).
DensePanel make_panel(const TickSeries& series, GapPolicy gaps = GapPolicy::Reject);

struct SynthSpec {
  Index companies = 1;
  Index steps = 1000;
  double initial_price = 100.0;
  /// Mean and standard deviation of per-step log-price increments.
  double drift = 0.0;
  double volatility = 0.01;
  /// Volumes are i.i.d. lognormal with this mean and log-scale sigma.
  double volume_mean = 100.0;
  double volume_sigma = 0.5;
  /// Shape of each company's risk matrix (orders x risks), sampled
  /// uniformly in [risk_min, risk_max].
  int orders = 1;
  int risks = 1;
  double risk_min = 0.0;
  double risk_max = 1.0;

  void validate() const;
};

struct SyntheticMarket {
  TickSeries series;
  std::vector<RiskVector> risks;
};

/// Deterministic for a fixed (spec, seed). Every company trades at every step.
SyntheticMarket generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

std::string company_name(Index q);

/// Tick CSV: header `step,company,price,volume`; value is derived.
TickSeries parse_tick_csv(std::string_view text);
std::string write_tick_csv(const TickSeries& series);

/// Risk CSV: header `company,m,j,coord` with 1-based m and j.
std::vector<RiskVector> parse_risk_csv(std::string_view text);
std::string write_risk_csv(const std::vector<RiskVector>& risks);

}  // namespace mbstat
