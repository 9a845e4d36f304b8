#include "mbstat/moments.hpp"

#include <algorithm>
#include <exception>
#include <map>
#include <thread>

#include "mbstat/text_io.hpp"

namespace mbstat {

void WindowConfig::validate() const {
  if (ticks_per_window < 1) throw InputError("ticks per window N must be at least 1");
  if (n_max < 1) throw InputError("n_max must be at least 1");
  if (xi_steps < 0) throw InputError("return shift xi must be non-negative");
  if (stride < 0) throw InputError("stride must be non-negative");
}

std::vector<WindowSpan> window_partition(Index steps, const WindowConfig& cfg) {
  cfg.validate();
  std::vector<WindowSpan> out;
  const Index n = cfg.ticks_per_window;
  if (steps < n) return out;
  const Index stride = cfg.effective_stride();
  const Index count = (steps - n) / stride + 1;
  out.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) {
    const Index first = k * stride;
    out.push_back({k, first, n, first + n / 2, first - cfg.xi_steps >= 0});
  }
  return out;
}

MomentVector positive_ratio(const MomentVector& num, const MomentVector& den, const char* what) {
  if (num.size() != den.size()) throw InputError("moment arrays differ in length");
  MomentVector out(num.size());
  for (Index m = 0; m < num.size(); ++m) {
    if (!(den(m) > 0.0)) throw NumericError(std::string(what) + " at m=" + std::to_string(m + 1));
    out(m) = num(m) / den(m);
  }
  return out;
}

MomentVector price_from_return(const MomentVector& r, const MomentVector& past_value, const MomentVector& volume) {
  if (r.size() != past_value.size()) throw InputError("moment arrays differ in length");
  return positive_ratio(r.cwiseProduct(past_value), volume, "degenerate volume");
}

CentralStats derived_central_stats(const MomentVector& p) {
  CentralStats s;
  if (p.size() < 1) return s;
  s.mean = p(0);
  if (p.size() < 2) return s;
  s.variance = p(1) - p(0) * p(0);
  if (p.size() < 3) return s;
  s.third_central = p(2) - 3.0 * p(1) * p(0) + 2.0 * p(0) * p(0) * p(0);
  if (s.variance > kVarianceFloor * std::abs(p(1))) {
    s.skewness = s.third_central / std::pow(s.variance, 1.5);
  }
  return s;
}

MomentSet window_moments(const DensePanel& panel, Index column, const WindowSpan& window, const WindowConfig& cfg) {
  const Index first = window.first_step;
  const Index len = window.length;
  if (first < 0 || first + len > panel.steps()) throw InputError("window outside the series");

  MomentSet set;
  set.company = panel.companies[static_cast<std::size_t>(column)];
  set.window = window;
  try {
    const auto values = panel.value.col(column).segment(first, len);
    const auto volumes = panel.volume.col(column).segment(first, len);
    const auto prices = panel.price.col(column).segment(first, len);

    const TradeMoments tm = trade_moments(values, volumes, cfg.n_max, cfg.prescale);
    set.value = tm.value;
    set.volume = tm.volume;
    set.price = price_moments(tm);
    set.freq_price = cfg.prescale ? scaled_power_means(prices, cfg.n_max) : frequency_price_moments(prices, cfg.n_max);
    if (window.return_eligible) {
      const Index past_first = first - cfg.xi_steps;
      if (past_first < 0) throw NumericError("shift out of range");
      const auto past_prices = panel.price.col(column).segment(past_first, len);
      set.past_value = past_value_moments(past_prices, volumes, cfg.n_max, cfg.prescale);
      set.ret = return_moments(tm, set.past_value);
    }
    set.stats = derived_central_stats(set.price);
  } catch (const NumericError& e) {
    throw NumericError("company " + set.company + " window " + std::to_string(window.index) + ": " + e.what());
  }
  return set;
}

std::vector<MomentSet> compute_moments(const DensePanel& panel, const WindowConfig& cfg, unsigned workers) {
  const auto windows = window_partition(panel, cfg);
  const std::size_t per_company = windows.size();
  const std::size_t tasks = per_company * static_cast<std::size_t>(panel.company_count());
  std::vector<MomentSet> out(tasks);
  if (tasks == 0) return out;

  auto run = [&](std::size_t task) {
    const auto q = static_cast<Index>(task / per_company);
    out[task] = window_moments(panel, q, windows[task % per_company], cfg);
  };

  workers = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(std::min<std::size_t>(tasks, 256)));
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks; ++t) run(t);
    return out;
  }

  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::size_t> failed_at(workers, tasks);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (tasks + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(tasks, begin + chunk);
        for (std::size_t t = begin; t < end; ++t) {
          try {
            run(t);
          } catch (...) {
            errors[w] = std::current_exception();
            failed_at[w] = t;
            return;
          }
        }
      });
    }
  }
  // Report the failure a sequential run would have hit first.
  const auto first = std::min_element(failed_at.begin(), failed_at.end());
  if (*first < tasks) std::rethrow_exception(errors[static_cast<std::size_t>(first - failed_at.begin())]);
  return out;
}

namespace {

constexpr std::string_view kMomentHeader = "company,window,center_step,kind,m,value";

void append_rows(std::string& out, const MomentSet& s, const char* kind, const MomentVector& v) {
  const std::string prefix =
      s.company + ',' + std::to_string(s.window.index) + ',' + std::to_string(s.window.center_step) + ',' + kind + ',';
  for (Index m = 0; m < v.size(); ++m) {
    out += prefix;
    out += std::to_string(m + 1);
    out += ',';
    out += format_double(v(m));
    out += '\n';
  }
}

}  // namespace

std::string write_moment_csv(const std::vector<MomentSet>& sets) {
  std::string out(kMomentHeader);
  out += '\n';
  for (const auto& s : sets) {
    append_rows(out, s, "C", s.value);
    append_rows(out, s, "U", s.volume);
    if (s.has_returns()) append_rows(out, s, "S", s.past_value);
    append_rows(out, s, "p", s.price);
    if (s.has_returns()) append_rows(out, s, "r", s.ret);
    append_rows(out, s, "pi", s.freq_price);
  }
  return out;
}

std::vector<MomentRow> parse_moment_csv(std::string_view text) {
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || line != kMomentHeader) {
    throw CsvError(1, "malformed header, expected '" + std::string(kMomentHeader) + "'");
  }
  std::vector<MomentRow> rows;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 6) throw CsvError(reader.row(), "expected 6 fields, got " + std::to_string(f.size()));
    const auto window = parse_int(f[1]);
    const auto center = parse_int(f[2]);
    const auto m = parse_int(f[4]);
    const auto value = parse_double(f[5]);
    if (!window || !center || !m || *m < 1 || !value) throw CsvError(reader.row(), "non-numeric field");
    rows.push_back({std::string(f[0]), *window, *center, std::string(f[3]), static_cast<int>(*m), *value});
  }
  return rows;
}

MomentVector select_moments(const std::vector<MomentRow>& rows, std::string_view company, Index window,
                            std::string_view kind) {
  std::map<int, double> by_order;
  for (const auto& r : rows) {
    if (r.company == company && r.window == window && r.kind == kind) by_order[r.m] = r.value;
  }
  if (by_order.empty()) {
    throw InputError("no '" + std::string(kind) + "' moments for company " + std::string(company) + " window " +
                     std::to_string(window));
  }
  MomentVector out(static_cast<Index>(by_order.size()));
  int expected = 1;
  for (const auto& [m, v] : by_order) {
    if (m != expected) throw InputError("moment orders are not contiguous from 1");
    out(m - 1) = v;
    ++expected;
  }
  return out;
}

}  // namespace mbstat
