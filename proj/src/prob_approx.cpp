#include "mbstat/prob_approx.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mbstat/summation.hpp"
#include "mbstat/text_io.hpp"

namespace mbstat {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

// Real polynomial log|F(x)| = sum_d c[d] x^d.
std::vector<double> envelope_polynomial(const CharFnApprox& f) {
  const int n = f.order();
  const auto& reg = f.regularizer();
  std::size_t degree = static_cast<std::size_t>(n);
  if (reg.kind == Regularizer::Kind::Power) degree = std::max(degree, static_cast<std::size_t>(reg.two_k));
  if (reg.kind == Regularizer::Kind::Polynomial) degree = static_cast<std::size_t>(n) + reg.tail.size();
  std::vector<double> c(degree + 1, 0.0);
  for (int m = 2; m <= n; m += 2) {
    const double sign = (m / 2) % 2 == 0 ? 1.0 : -1.0;
    c[static_cast<std::size_t>(m)] += sign * f.coefficients()(m - 1) / factorial(m);
  }
  if (reg.kind == Regularizer::Kind::Power) c[static_cast<std::size_t>(reg.two_k)] -= reg.b;
  if (reg.kind == Regularizer::Kind::Polynomial) {
    for (Index i = 0; i < reg.tail.size(); ++i) c[static_cast<std::size_t>(n + 1 + i)] -= reg.tail(i);
  }
  while (c.size() > 1 && c.back() == 0.0) c.pop_back();
  return c;
}

double horner(const std::vector<double>& c, double x) {
  double r = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) r = r * x + *it;
  return r;
}

double trapezoid(const Vector<double>& y, double h) {
  const Index n = y.size();
  if (n < 2) return 0.0;
  NeumaierSum<double> s;
  s.add(0.5 * y(0));
  for (Index i = 1; i + 1 < n; ++i) s.add(y(i));
  s.add(0.5 * y(n - 1));
  return s.value() * h;
}

void fill_diagnostics(DensityGrid& dg) {
  dg.normalization_residual = trapezoid(dg.eta, dg.spacing) - 1.0;
  dg.min_eta = dg.eta.minCoeff();
  dg.negative_mass = -trapezoid(dg.eta.cwiseMin(0.0), dg.spacing);
}

void check_grid(const DensityGridSpec& grid) {
  if (!(grid.p_max > grid.p_min) || !std::isfinite(grid.p_min) || !std::isfinite(grid.p_max)) {
    throw InputError("density grid needs p_min < p_max");
  }
  if (grid.points < 2) throw InputError("density grid needs at least 2 points");
}

}  // namespace

double Regularizer::evaluate(double x, int n) const {
  switch (kind) {
    case Kind::None:
      return 0.0;
    case Kind::Power:
      return b * std::pow(x, two_k);
    case Kind::Polynomial: {
      double r = 0.0;
      for (Index i = tail.size() - 1; i >= 0; --i) r = r * x + tail(i);
      return r * std::pow(x, n + 1);
    }
  }
  return 0.0;
}

std::string Regularizer::describe() const {
  switch (kind) {
    case Kind::None:
      return "none";
    case Kind::Power:
      return "power b=" + format_double(b) + " 2k=" + std::to_string(two_k);
    case Kind::Polynomial: {
      std::string s = "polynomial";
      for (Index i = 0; i < tail.size(); ++i) s += (i == 0 ? " " : ",") + format_double(tail(i));
      return s;
    }
  }
  return {};
}

Regularizer default_regularizer(int n, double variance) {
  if (n < 1) throw InputError("approximation order must be positive");
  if (!(variance > 0.0) || !std::isfinite(variance)) throw NumericError("variance non-positive");
  const int two_k = n % 2 == 0 ? n + 2 : n + 1;
  const int k = two_k / 2;
  const double b = 0.05 * std::pow(variance, k) * factorial(two_k) / (factorial(k) * std::pow(2.0, k));
  return Regularizer::power(b, two_k);
}

CharFnApprox::CharFnApprox(MomentVector cumulants, Regularizer reg) : a_(std::move(cumulants)), reg_(std::move(reg)) {
  const int n = order();
  if (n < 1) throw InputError("approximation needs at least one coefficient");
  if (!a_.allFinite()) throw InputError("coefficients must be finite");
  switch (reg_.kind) {
    case Regularizer::Kind::None:
      if (n != 2 || !(a_(1) > 0.0)) throw InputError("unregularized form needs n = 2 and a_2 > 0");
      break;
    case Regularizer::Kind::Power:
      if (!(reg_.b > 0.0) || !std::isfinite(reg_.b)) throw InputError("regularizer needs b > 0");
      if (reg_.two_k % 2 != 0 || reg_.two_k <= n) throw InputError("regularizer needs an even power 2k > n");
      break;
    case Regularizer::Kind::Polynomial: {
      const Index top = n + reg_.tail.size();
      if (reg_.tail.size() == 0 || top % 2 != 0) throw InputError("polynomial tail must end at an even order");
      if (!reg_.tail.allFinite() || !(reg_.tail(reg_.tail.size() - 1) > 0.0)) {
        throw InputError("polynomial tail needs a positive leading coefficient");
      }
      break;
    }
  }
}

std::complex<double> CharFnApprox::exponent(double x) const {
  const std::complex<double> ix(0.0, x);
  std::complex<double> term(1.0, 0.0);
  std::complex<double> acc(0.0, 0.0);
  for (int m = 1; m <= order(); ++m) {
    term *= ix / static_cast<double>(m);
    acc += a_(m - 1) * term;
  }
  return acc - reg_.evaluate(x, order());
}

double CharFnApprox::variance() const {
  return order() >= 2 ? a_(1) : std::numeric_limits<double>::quiet_NaN();
}

DensityGridSpec centered_grid(double mean, double sigma, double range_sigmas, Index points) {
  if (!(sigma > 0.0)) throw NumericError("variance non-positive");
  return {mean - range_sigmas * sigma, mean + range_sigmas * sigma, points};
}

double inversion_cutoff(const CharFnApprox& f, double decay_tol) {
  if (!(decay_tol > 0.0 && decay_tol < 1.0)) throw InputError("decay tolerance must lie in (0, 1)");
  const auto c = envelope_polynomial(f);
  const std::size_t degree = c.size() - 1;
  if (degree == 0 || degree % 2 != 0 || !(c.back() < 0.0)) {
    throw NumericError("insufficient decay; increase b or 2k");
  }
  // Beyond `reach` the leading term dominates value and slope, so log|F| is
  // negative and decreasing in |x|.
  const double lead = std::abs(c.back());
  const double d = static_cast<double>(degree);
  double reach = 1.0;
  for (std::size_t j = 0; j < degree; ++j) {
    if (c[j] == 0.0) continue;
    reach = std::max(reach, std::pow(2.0 * d * d * std::abs(c[j]) / lead, 1.0 / (d - static_cast<double>(j))));
  }
  const double threshold = std::log(decay_tol);
  auto log_env = [&](double x) { return std::max(horner(c, x), horner(c, -x)); };
  int guard = 0;
  while (log_env(reach) >= threshold) {
    reach *= 2.0;
    if (++guard > 200) throw NumericError("insufficient decay; increase b or 2k");
  }
  constexpr int kScan = 20000;
  int last = 0;
  for (int i = 0; i <= kScan; ++i) {
    if (log_env(reach * i / kScan) >= threshold) last = i;
  }
  return reach * std::min(last + 1, kScan) / kScan;
}

namespace {

// Quadrature weights times F at the x nodes, scaled by 1/(2 pi).
struct Inverter {
  std::vector<double> x;
  std::vector<std::complex<double>> weighted;

  Inverter(const CharFnApprox& f, double cutoff, Index points) {
    const auto m = static_cast<std::size_t>(points);
    x.resize(m);
    weighted.resize(m);
    const double dx = 2.0 * cutoff / static_cast<double>(points - 1);
    for (std::size_t j = 0; j < m; ++j) {
      x[j] = -cutoff + dx * static_cast<double>(j);
      const double w = (j == 0 || j + 1 == m) ? 0.5 * dx : dx;
      weighted[j] = f(x[j]) * (w / kTwoPi);
    }
  }

  std::complex<double> at(double p) const {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t j = 0; j < x.size(); ++j) acc += weighted[j] * std::polar(1.0, -x[j] * p);
    return acc;
  }

  std::vector<std::complex<double>> on_grid(double p0, double dp, Index count) const {
    constexpr Index kReanchor = 128;
    std::vector<std::complex<double>> acc(static_cast<std::size_t>(count));
    for (std::size_t j = 0; j < x.size(); ++j) {
      const std::complex<double> rot = std::polar(1.0, -x[j] * dp);
      std::complex<double> phase;
      for (Index k = 0; k < count; ++k) {
        if (k % kReanchor == 0) phase = std::polar(1.0, -x[j] * (p0 + dp * static_cast<double>(k)));
        acc[static_cast<std::size_t>(k)] += weighted[j] * phase;
        phase *= rot;
      }
    }
    return acc;
  }
};

}  // namespace

DensityGrid charfn_to_density(const CharFnApprox& f, const DensityGridSpec& grid, const InversionSpec& spec) {
  check_grid(grid);
  if (spec.x_points < 16) throw InputError("inversion needs at least 16 x points");
  double cutoff = spec.cutoff;
  if (cutoff > 0.0) {
    const double edge = std::max(std::abs(f(cutoff)), std::abs(f(-cutoff)));
    if (edge > spec.decay_tol) {
      throw NumericError("insufficient decay; increase b or 2k (|F(X*)| = " + format_double(edge) + ")");
    }
  } else {
    cutoff = inversion_cutoff(f, spec.decay_tol);
  }

  const Inverter inv(f, cutoff, spec.x_points);
  double lo = grid.p_min;
  double hi = grid.p_max;
  Index points = grid.points;

  if (spec.auto_extend) {
    // The quadrature result is periodic in p with this period.
    const double period = kTwoPi * static_cast<double>(spec.x_points - 1) / (2.0 * cutoff);
    double peak = 0.0;
    for (int i = 0; i <= 64; ++i) peak = std::max(peak, std::abs(inv.at(lo + (hi - lo) * i / 64.0).real()));
    auto band_max = [&](double from, double to) {
      double mx = 0.0;
      for (int i = 0; i <= 16; ++i) mx = std::max(mx, std::abs(inv.at(from + (to - from) * i / 16.0).real()));
      return mx;
    };
    for (int iter = 0; iter < 40; ++iter) {
      const double width = hi - lo;
      if (width > 0.5 * period) break;
      const bool grow_lo = band_max(lo, lo + 0.02 * width) > spec.tail_tol * peak;
      const bool grow_hi = band_max(hi - 0.02 * width, hi) > spec.tail_tol * peak;
      if (!grow_lo && !grow_hi) break;
      if (grow_lo) lo -= 0.5 * width;
      if (grow_hi) hi += 0.5 * width;
    }
    // Keep the p spacing well inside the band limit set by the cutoff.
    const double max_dp = std::numbers::pi / (2.0 * cutoff);
    while ((hi - lo) / static_cast<double>(points - 1) > max_dp && points < (Index{1} << 20)) points *= 2;
  }

  DensityGrid dg;
  dg.spacing = (hi - lo) / static_cast<double>(points - 1);
  dg.cutoff = cutoff;
  dg.x_points = spec.x_points;
  dg.p.resize(points);
  dg.eta.resize(points);
  const auto values = inv.on_grid(lo, dg.spacing, points);
  for (Index k = 0; k < points; ++k) {
    dg.p(k) = lo + dg.spacing * static_cast<double>(k);
    dg.eta(k) = values[static_cast<std::size_t>(k)].real();
    dg.imag_residue = std::max(dg.imag_residue, std::abs(values[static_cast<std::size_t>(k)].imag()));
  }
  fill_diagnostics(dg);
  if (dg.negative_mass > spec.negativity_budget) {
    throw NumericError("negative density mass " + format_double(dg.negative_mass) + " exceeds budget " +
                       format_double(spec.negativity_budget));
  }
  return dg;
}

double density_moment(const DensityGrid& dg, int m, double coverage_tol) {
  if (m < 0) throw InputError("moment order must be non-negative");
  if (std::abs(dg.normalization_residual) > coverage_tol) {
    throw NumericError("insufficient coverage: density integrates to 1" +
                       std::string(dg.normalization_residual < 0 ? "" : "+") +
                       format_double(dg.normalization_residual));
  }
  Vector<double> integrand = dg.eta;
  for (Index k = 0; k < dg.p.size(); ++k) integrand(k) *= std::pow(dg.p(k), m);
  return trapezoid(integrand, dg.spacing);
}

MomentVector density_moments(const DensityGrid& dg, int n, double coverage_tol) {
  MomentVector out(n);
  for (int m = 1; m <= n; ++m) out(m - 1) = density_moment(dg, m, coverage_tol);
  return out;
}

DensityGrid gaussian_density(double mean, double variance, const DensityGridSpec& grid) {
  if (!(variance > 0.0) || !std::isfinite(variance)) throw NumericError("variance non-positive");
  check_grid(grid);
  DensityGrid dg;
  dg.spacing = (grid.p_max - grid.p_min) / static_cast<double>(grid.points - 1);
  dg.p.resize(grid.points);
  dg.eta.resize(grid.points);
  const double norm = 1.0 / std::sqrt(kTwoPi * variance);
  for (Index k = 0; k < grid.points; ++k) {
    const double p = grid.p_min + dg.spacing * static_cast<double>(k);
    dg.p(k) = p;
    dg.eta(k) = norm * std::exp(-(p - mean) * (p - mean) / (2.0 * variance));
  }
  fill_diagnostics(dg);
  return dg;
}

std::string write_density_csv(const DensityGrid& dg) {
  std::string out = "p,eta\n";
  for (Index k = 0; k < dg.p.size(); ++k) {
    out += format_double(dg.p(k));
    out += ',';
    out += format_double(dg.eta(k));
    out += '\n';
  }
  return out;
}

}  // namespace mbstat
