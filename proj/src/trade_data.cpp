#include "mbstat/trade_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "mbstat/errors.hpp"
#include "mbstat/text_io.hpp"

namespace mbstat {

TickSeries::TickSeries(std::vector<TickRecord> ticks) : ticks_(std::move(ticks)) {
  std::set<std::string> names;
  for (const auto& t : ticks_) {
    names.insert(t.company);
    max_step_ = std::max(max_step_, t.step);
  }
  companies_.assign(names.begin(), names.end());
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                [kind](const Violation& v) { return v.kind == kind; }));
}

std::string ValidationReport::summary(std::size_t limit) const {
  std::string out;
  for (std::size_t i = 0; i < violations.size() && i < limit; ++i) {
    if (i > 0) out += "; ";
    out += violations[i].message;
  }
  if (violations.size() > limit) {
    out += "; ... (" + std::to_string(violations.size() - limit) + " more)";
  }
  return out;
}

namespace {

std::string where(const TickRecord& t) {
  return "company " + t.company + " step " + std::to_string(t.step);
}

}  // namespace

ValidationReport validate_series(const TickSeries& series) {
  ValidationReport report;
  auto flag = [&report](ViolationKind kind, const TickRecord& t, std::string msg) {
    report.violations.push_back({kind, t.company, t.step, std::move(msg)});
  };

  std::map<std::string, std::vector<std::int64_t>> steps_by_company;
  for (const auto& t : series.ticks()) {
    if (t.step < 0) flag(ViolationKind::NegativeStep, t, "negative step at " + where(t));
    const bool positive = std::isfinite(t.price) && std::isfinite(t.volume) && std::isfinite(t.value) &&
                          t.price > 0.0 && t.volume > 0.0 && t.value > 0.0;
    if (!positive) {
      flag(ViolationKind::NonPositive, t, "non-positive price, volume or value at " + where(t));
    } else {
      const double expected = t.price * t.volume;
      if (std::abs(t.value - expected) > kValueTolerance * std::abs(expected)) {
        flag(ViolationKind::ValueMismatch, t, "value mismatch at " + where(t) + ": " +
                                                  format_double(t.value) + " != " + format_double(expected));
      }
    }
    steps_by_company[t.company].push_back(t.step);
  }

  const std::int64_t last = series.max_step();
  for (auto& [company, steps] : steps_by_company) {
    std::sort(steps.begin(), steps.end());
    std::int64_t distinct = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (i > 0 && steps[i] == steps[i - 1]) {
        report.violations.push_back({ViolationKind::Duplicate, company, steps[i],
                                     "duplicate tick for company " + company + " step " +
                                         std::to_string(steps[i])});
      } else if (steps[i] >= 0) {
        ++distinct;
      }
    }
    const std::int64_t missing = (last + 1) - distinct;
    if (missing > 0) {
      std::int64_t first_missing = 0;
      for (std::int64_t s : steps) {
        if (s < first_missing) continue;
        if (s != first_missing) break;
        ++first_missing;
      }
      report.violations.push_back({ViolationKind::MissingSteps, company, first_missing,
                                   "missing steps for company " + company + ": " + std::to_string(missing) +
                                       " of " + std::to_string(last + 1) + " (first at step " +
                                       std::to_string(first_missing) + ")"});
    }
  }
  return report;
}

Index DensePanel::column(std::string_view company) const {
  const auto it = std::lower_bound(companies.begin(), companies.end(), company);
  if (it == companies.end() || *it != company) return -1;
  return static_cast<Index>(it - companies.begin());
}

DensePanel make_panel(const TickSeries& series, GapPolicy gaps) {
  const auto report = validate_series(series);
  const bool repairable = gaps == GapPolicy::ForwardFill &&
                          report.count(ViolationKind::MissingSteps) == report.violations.size();
  if (!report.accepted() && !repairable) {
    throw InputError("tick series rejected: " + report.summary());
  }

  DensePanel panel;
  panel.companies = series.companies();
  const Index steps = series.max_step() + 1;
  const Index cols = static_cast<Index>(panel.companies.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  panel.price = Matrix<double>::Constant(steps, cols, nan);
  panel.volume = Matrix<double>::Zero(steps, cols);
  panel.value = Matrix<double>::Zero(steps, cols);

  for (const auto& t : series.ticks()) {
    const Index q = panel.column(t.company);
    panel.price(t.step, q) = t.price;
    panel.volume(t.step, q) = t.volume;
    panel.value(t.step, q) = t.value;
  }

  if (!report.accepted()) {
    for (Index q = 0; q < cols; ++q) {
      if (std::isnan(panel.price(0, q))) {
        throw InputError("cannot forward-fill company " + panel.companies[q] +
                         ": no trade at step 0 to carry forward");
      }
      for (Index i = 1; i < steps; ++i) {
        if (std::isnan(panel.price(i, q))) panel.price(i, q) = panel.price(i - 1, q);
      }
    }
  }
  return panel;
}

void SynthSpec::validate() const {
  if (companies <= 0) throw InputError("companies must be positive");
  if (steps <= 0) throw InputError("steps must be positive");
  if (!(initial_price > 0.0) || !std::isfinite(initial_price)) throw InputError("initial price must be positive");
  if (!(volume_mean > 0.0) || !std::isfinite(volume_mean)) throw InputError("volume mean must be positive");
  if (!(volatility >= 0.0) || !std::isfinite(volatility)) throw InputError("volatility must be non-negative");
  if (!(volume_sigma >= 0.0) || !std::isfinite(volume_sigma)) throw InputError("volume sigma must be non-negative");
  if (!std::isfinite(drift)) throw InputError("drift must be finite");
  if (orders <= 0) throw InputError("risk orders must be positive");
  if (risks <= 0) throw InputError("risk count must be positive");
  if (!(risk_min >= 0.0 && risk_min <= risk_max && risk_max <= 1.0)) {
    throw InputError("risk range must satisfy 0 <= min <= max <= 1");
  }
}

std::string company_name(Index q) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "C%04lld", static_cast<long long>(q));
  return buf;
}

SyntheticMarket generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Index q_count = spec.companies;
  const Index steps = spec.steps;
  Matrix<double> price(steps, q_count);
  Matrix<double> volume(steps, q_count);
  const double log_mean = std::log(spec.volume_mean) - 0.5 * spec.volume_sigma * spec.volume_sigma;

  for (Index q = 0; q < q_count; ++q) {
    double p = spec.initial_price;
    for (Index i = 0; i < steps; ++i) {
      if (i > 0) {
        double increment = spec.drift;
        if (spec.volatility > 0.0) increment += spec.volatility * normal(rng);
        if (increment != 0.0) p *= std::exp(increment);
      }
      price(i, q) = p;
      volume(i, q) = spec.volume_sigma > 0.0 ? std::exp(log_mean + spec.volume_sigma * normal(rng))
                                             : spec.volume_mean;
    }
  }

  std::vector<TickRecord> ticks;
  ticks.reserve(static_cast<std::size_t>(steps * q_count));
  for (Index i = 0; i < steps; ++i) {
    for (Index q = 0; q < q_count; ++q) {
      ticks.push_back(TickRecord::trade(i, company_name(q), price(i, q), volume(i, q)));
    }
  }

  std::uniform_real_distribution<double> coord(spec.risk_min, spec.risk_max);
  std::vector<RiskVector> risks;
  for (Index q = 0; q < q_count; ++q) {
    RiskVector rv{company_name(q), Matrix<double>(spec.orders, spec.risks)};
    for (int m = 0; m < spec.orders; ++m) {
      for (int j = 0; j < spec.risks; ++j) {
        rv.coords(m, j) = spec.risk_min == spec.risk_max ? spec.risk_min : coord(rng);
      }
    }
    risks.push_back(std::move(rv));
  }
  return {TickSeries(std::move(ticks)), std::move(risks)};
}

namespace {

constexpr std::string_view kTickHeader = "step,company,price,volume";
constexpr std::string_view kRiskHeader = "company,m,j,coord";

void expect_header(LineReader& reader, std::string_view header) {
  std::string_view line;
  if (!reader.next(line)) throw CsvError(1, "missing header, expected '" + std::string(header) + "'");
  if (line != header) {
    throw CsvError(1, "malformed header '" + std::string(line) + "', expected '" + std::string(header) + "'");
  }
}

double positive_field(std::size_t row, std::string_view text, const char* name) {
  const auto v = parse_double(text);
  if (!v || !std::isfinite(*v)) {
    throw CsvError(row, std::string(name) + " is not numeric: '" + std::string(text) + "'");
  }
  if (!(*v > 0.0)) throw CsvError(row, std::string(name) + " must be positive (got " + std::string(text) + ")");
  return *v;
}

}  // namespace

TickSeries parse_tick_csv(std::string_view text) {
  LineReader reader(text);
  expect_header(reader, kTickHeader);
  std::vector<TickRecord> ticks;
  std::string_view line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const std::size_t row = reader.row();
    const auto f = split_fields(line);
    if (f.size() != 4) throw CsvError(row, "expected 4 fields, got " + std::to_string(f.size()));
    const auto step = parse_int(f[0]);
    if (!step) throw CsvError(row, "step is not an integer: '" + std::string(f[0]) + "'");
    if (*step < 0) throw CsvError(row, "step must be non-negative");
    if (f[1].empty()) throw CsvError(row, "empty company id");
    const double price = positive_field(row, f[2], "price");
    const double volume = positive_field(row, f[3], "volume");
    ticks.push_back(TickRecord::trade(*step, std::string(f[1]), price, volume));
  }
  return TickSeries(std::move(ticks));
}

std::string write_tick_csv(const TickSeries& series) {
  std::string out(kTickHeader);
  out += '\n';
  for (const auto& t : series.ticks()) {
    out += std::to_string(t.step);
    out += ',';
    out += t.company;
    out += ',';
    out += format_double(t.price);
    out += ',';
    out += format_double(t.volume);
    out += '\n';
  }
  return out;
}

std::vector<RiskVector> parse_risk_csv(std::string_view text) {
  LineReader reader(text);
  expect_header(reader, kRiskHeader);
  struct Entry {
    std::int64_t m, j;
    double coord;
    std::size_t row;
  };
  std::map<std::string, std::vector<Entry>> by_company;
  std::string_view line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const std::size_t row = reader.row();
    const auto f = split_fields(line);
    if (f.size() != 4) throw CsvError(row, "expected 4 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) throw CsvError(row, "empty company id");
    const auto m = parse_int(f[1]);
    const auto j = parse_int(f[2]);
    if (!m || *m < 1) throw CsvError(row, "m must be a positive integer");
    if (!j || *j < 1) throw CsvError(row, "j must be a positive integer");
    const auto c = parse_double(f[3]);
    if (!c || !std::isfinite(*c)) throw CsvError(row, "coord is not numeric: '" + std::string(f[3]) + "'");
    if (*c < 0.0 || *c > 1.0) throw CsvError(row, "coord must lie in [0,1] (got " + std::string(f[3]) + ")");
    by_company[std::string(f[0])].push_back({*m, *j, *c, row});
  }

  std::vector<RiskVector> out;
  for (auto& [company, entries] : by_company) {
    std::int64_t orders = 0, risks = 0;
    for (const auto& e : entries) {
      orders = std::max(orders, e.m);
      risks = std::max(risks, e.j);
    }
    RiskVector rv{company, Matrix<double>::Constant(orders, risks, std::numeric_limits<double>::quiet_NaN())};
    for (const auto& e : entries) {
      if (!std::isnan(rv.coords(e.m - 1, e.j - 1))) {
        throw CsvError(e.row, "duplicate coordinate for company " + company);
      }
      rv.coords(e.m - 1, e.j - 1) = e.coord;
    }
    for (Index m = 0; m < rv.coords.rows(); ++m) {
      for (Index j = 0; j < rv.coords.cols(); ++j) {
        if (std::isnan(rv.coords(m, j))) {
          throw InputError("company " + company + " lacks coordinate m=" + std::to_string(m + 1) +
                           " j=" + std::to_string(j + 1));
        }
      }
    }
    out.push_back(std::move(rv));
  }
  return out;
}

std::string write_risk_csv(const std::vector<RiskVector>& risks) {
  std::string out(kRiskHeader);
  out += '\n';
  for (const auto& rv : risks) {
    for (Index m = 0; m < rv.coords.rows(); ++m) {
      for (Index j = 0; j < rv.coords.cols(); ++j) {
        out += rv.company + ',' + std::to_string(m + 1) + ',' + std::to_string(j + 1) + ',' +
               format_double(rv.coords(m, j)) + '\n';
      }
    }
  }
  return out;
}

}  // namespace mbstat
