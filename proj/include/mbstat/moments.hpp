#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mbstat/errors.hpp"
#include "mbstat/summation.hpp"
#include "mbstat/trade_data.hpp"
#include "mbstat/types.hpp"

namespace mbstat {

/// Averaging windows on the tick grid. All sizes are step counts.
struct WindowConfig {
  /// Ticks per averaging window (N).
  Index ticks_per_window = 1;
  /// Return shift in steps.
  Index xi_steps = 0;
  /// Highest moment order.
  int n_max = 1;
  /// Distance between window starts; 0 means ticks_per_window (disjoint
  /// blocks). A smaller stride gives a moving average.
  Index stride = 0;
  /// Accumulate powers of x / mean(x) and rescale by mean(x)^m afterwards.
  bool prescale = false;

  Index effective_stride() const { return stride > 0 ? stride : ticks_per_window; }
  void validate() const;
};

/// Window k covers steps [first_step, first_step + length).
struct WindowSpan {
  Index index = 0;
  Index first_step = 0;
  Index length = 0;
  Index center_step = 0;
  /// Steps [first_step - xi, first_step + length - xi) exist.
  bool return_eligible = false;
};

/// Trailing partial windows are dropped; fewer than N steps yields none.
std::vector<WindowSpan> window_partition(Index steps, const WindowConfig& cfg);
inline std::vector<WindowSpan> window_partition(const DensePanel& panel, const WindowConfig& cfg) {
  return window_partition(panel.steps(), cfg);
}

/// |x|^m beyond this is reported as overflow instead of losing precision.
inline constexpr double kOverflowLimit = 1e300;

/// (1/N) sum_i x_i^m for m = 1..n_max with compensated left-to-right sums.
template <typename Derived>
Vector<typename Derived::Scalar> power_means(const Eigen::MatrixBase<Derived>& x, int n_max) {
  using Scalar = typename Derived::Scalar;
  const Index n = x.size();
  if (n == 0) throw InputError("power means of an empty window");
  std::vector<NeumaierSum<Scalar>> acc(static_cast<std::size_t>(n_max));
  for (Index i = 0; i < n; ++i) {
    const Scalar xi = x(i);
    Scalar power = xi;
    for (int m = 0; m < n_max; ++m) {
      if (!std::isfinite(power) || std::abs(power) > Scalar(kOverflowLimit)) {
        throw NumericError("moment overflow at m=" + std::to_string(m + 1));
      }
      acc[static_cast<std::size_t>(m)].add(power);
      power *= xi;
    }
  }
  Vector<Scalar> out(n_max);
  for (int m = 0; m < n_max; ++m) out(m) = acc[static_cast<std::size_t>(m)].value() / Scalar(n);
  return out;
}

/// power_means on x / mean(x), rescaled by mean(x)^m.
template <typename Derived>
Vector<typename Derived::Scalar> scaled_power_means(const Eigen::MatrixBase<Derived>& x, int n_max) {
  using Scalar = typename Derived::Scalar;
  NeumaierSum<Scalar> s;
  for (Index i = 0; i < x.size(); ++i) s.add(x(i));
  const Scalar mean = s.value() / Scalar(x.size());
  if (!(mean != Scalar(0)) || !std::isfinite(mean)) return power_means(x, n_max);
  Vector<Scalar> out = power_means((x.array() / mean).matrix().eval(), n_max);
  Scalar factor = mean;
  for (int m = 0; m < n_max; ++m) {
    out(m) *= factor;
    if (!std::isfinite(out(m))) throw NumericError("moment overflow at m=" + std::to_string(m + 1));
    factor *= mean;
  }
  return out;
}

/// Value moments C(;m) and volume moments U(;m) of one window.
struct TradeMoments {
  MomentVector value;
  MomentVector volume;
};

template <typename DerivedC, typename DerivedU>
TradeMoments trade_moments(const Eigen::MatrixBase<DerivedC>& values, const Eigen::MatrixBase<DerivedU>& volumes,
                           int n_max, bool prescale = false) {
  if (prescale) return {scaled_power_means(values, n_max), scaled_power_means(volumes, n_max)};
  return {power_means(values, n_max), power_means(volumes, n_max)};
}

/// Elementwise num / den; throws NumericError(`what`) where den is not
/// strictly positive.
MomentVector positive_ratio(const MomentVector& num, const MomentVector& den, const char* what);

/// p(;m) = C(;m) / U(;m). p(;1) is the VWAP.
inline MomentVector price_moments(const TradeMoments& tm) {
  return positive_ratio(tm.value, tm.volume, "degenerate volume");
}

/// Frequency-based moments: plain average of p^m over the window.
template <typename Derived>
Vector<typename Derived::Scalar> frequency_price_moments(const Eigen::MatrixBase<Derived>& prices, int n_max) {
  return power_means(prices, n_max);
}

/// S(;m) = (1/N) sum_i (p_{i - xi} U_i)^m, with past_prices already shifted.
template <typename DerivedP, typename DerivedU>
Vector<typename DerivedP::Scalar> past_value_moments(const Eigen::MatrixBase<DerivedP>& past_prices,
                                                     const Eigen::MatrixBase<DerivedU>& volumes, int n_max,
                                                     bool prescale = false) {
  if (past_prices.size() != volumes.size()) throw InputError("shift out of range");
  const auto past_value = past_prices.cwiseProduct(volumes).eval();
  return prescale ? scaled_power_means(past_value, n_max) : power_means(past_value, n_max);
}

/// r(;m) = C(;m) / S(;m).
inline MomentVector return_moments(const TradeMoments& tm, const MomentVector& past_value) {
  return positive_ratio(tm.value, past_value, "degenerate past value");
}

/// p(;m) = r(;m) S(;m) / U(;m).
MomentVector price_from_return(const MomentVector& r, const MomentVector& past_value, const MomentVector& volume);

struct CentralStats {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
  double third_central = std::numeric_limits<double>::quiet_NaN();
  /// Undefined when variance is not positive or third moment is missing.
  std::optional<double> skewness;
};

/// Relative variance floor below which skewness is reported undefined.
inline constexpr double kVarianceFloor = 1e-14;

CentralStats derived_central_stats(const MomentVector& p);

/// All moments of one company over one window.
struct MomentSet {
  std::string company;
  WindowSpan window;
  MomentVector value;       // C(t_k;m)
  MomentVector volume;      // U(t_k;m)
  MomentVector past_value;  // S(t_k,xi;m), empty unless window.return_eligible
  MomentVector price;       // p(t_k;m)
  MomentVector ret;         // r(t_k,xi;m), empty unless window.return_eligible
  MomentVector freq_price;  // pi(t_k;m)
  CentralStats stats;

  bool has_returns() const { return window.return_eligible; }
};

/// Moments of one company column over one window.
MomentSet window_moments(const DensePanel& panel, Index column, const WindowSpan& window, const WindowConfig& cfg);

/// Every (company, window) in (company, window) order. Windows are split
/// across `workers` threads; the output does not depend on the worker count.
std::vector<MomentSet> compute_moments(const DensePanel& panel, const WindowConfig& cfg, unsigned workers = 1);

/// Moment CSV: `company,window,center_step,kind,m,value`, kinds in the order
/// C, U, S, p, r, pi (S and r omitted for windows without a past).
std::string write_moment_csv(const std::vector<MomentSet>& sets);

struct MomentRow {
  std::string company;
  Index window = 0;
  Index center_step = 0;
  std::string kind;
  int m = 0;
  double value = 0.0;
};

std::vector<MomentRow> parse_moment_csv(std::string_view text);

/// Moments of one kind for one (company, window), ordered m = 1..n. Throws
/// InputError when the rows are missing or not contiguous in m.
MomentVector select_moments(const std::vector<MomentRow>& rows, std::string_view company, Index window,
                            std::string_view kind);

}  // namespace mbstat
