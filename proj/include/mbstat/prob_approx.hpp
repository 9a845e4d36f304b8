#pragma once

#include <complex>
#include <string>

#include "mbstat/errors.hpp"
#include "mbstat/types.hpp"

namespace mbstat {

/// Cumulants a_1..a_n from raw moments p(;1)..p(;n) (index 0 holds order 1):
///   a_m = p(;m) - sum_{j=1}^{m-1} C(m-1, j-1) a_j p(;m-j).
/// These are the coefficients of the exponent sum_m a_m (ix)^m / m! whose
/// derivatives at 0 reproduce the moments.
template <typename Derived>
Vector<typename Derived::Scalar> moments_to_cumulants(const Eigen::MatrixBase<Derived>& moments) {
  using Scalar = typename Derived::Scalar;
  const Index n = moments.size();
  if (n < 1) throw InputError("need at least one moment");
  Vector<Scalar> a(n);
  for (Index m = 1; m <= n; ++m) {
    Scalar acc = moments(m - 1);
    Scalar binom = Scalar(1);  // C(m-1, j-1)
    for (Index j = 1; j < m; ++j) {
      acc -= binom * a(j - 1) * moments(m - j - 1);
      binom = binom * Scalar(m - j) / Scalar(j);
    }
    a(m - 1) = acc;
  }
  return a;
}

/// Term subtracted from the cumulant exponent so the characteristic function
/// decays and has a Fourier transform. It leaves the first n moments intact.
struct Regularizer {
  enum class Kind {
    /// Plain exponent; only valid for n = 2 with a_2 > 0 (Gaussian form).
    None,
    /// b * x^(2k) with b > 0 and 2k > n even.
    Power,
    /// sum_{m=n+1}^{2K} c_m x^m with c_{2K} > 0.
    Polynomial,
  };

  Kind kind = Kind::None;
  double b = 0.0;
  int two_k = 0;
  /// Polynomial coefficients for orders n+1 .. 2K (index 0 holds n+1).
  MomentVector tail;

  static Regularizer none() { return {}; }
  static Regularizer power(double b, int two_k) { return {Kind::Power, b, two_k, {}}; }
  static Regularizer polynomial(MomentVector tail) { return {Kind::Polynomial, 0.0, 0, std::move(tail)}; }

  /// Value at x for an approximation of order n.
  double evaluate(double x, int n) const;
  std::string describe() const;
};

/// Smallest even 2k > n and b = 0.05 * variance^k * (2k)! / (k! 2^k).
/// Throws NumericError("variance non-positive") when variance <= 0.
Regularizer default_regularizer(int n, double variance);

/// n-approximation F_n(x) = exp{ sum_m a_m (ix)^m / m! - Q(x) }.
class CharFnApprox {
 public:
  CharFnApprox(MomentVector cumulants, Regularizer reg);

  int order() const { return static_cast<int>(a_.size()); }
  const MomentVector& coefficients() const { return a_; }
  const Regularizer& regularizer() const { return reg_; }

  std::complex<double> exponent(double x) const;
  std::complex<double> operator()(double x) const { return std::exp(exponent(x)); }
  /// log |F(x)|.
  double log_envelope(double x) const { return exponent(x).real(); }

  double mean() const { return a_(0); }
  /// a_2, or NaN for n = 1.
  double variance() const;

 private:
  MomentVector a_;
  Regularizer reg_;
};

/// Validates the regularizer against the coefficients.
inline CharFnApprox build_charfn(const MomentVector& cumulants, const Regularizer& reg) {
  return CharFnApprox(cumulants, reg);
}

/// Uniform evaluation grid in price units.
struct DensityGridSpec {
  double p_min = 0.0;
  double p_max = 1.0;
  Index points = 4096;
};

DensityGridSpec centered_grid(double mean, double sigma, double range_sigmas = 8.0, Index points = 4096);

struct InversionSpec {
  Index x_points = 4096;
  /// Integration cutoff X*; 0 picks the point where |F| falls below decay_tol.
  double cutoff = 0.0;
  double decay_tol = 1e-12;
  /// Widen the p range on each side until |eta| in the outer 2% is below
  /// tail_tol times the peak.
  bool auto_extend = true;
  double tail_tol = 1e-12;
  /// Largest tolerated negative probability mass.
  double negativity_budget = 1e-3;
};

struct DensityGrid {
  Vector<double> p;
  Vector<double> eta;
  double spacing = 0.0;
  double cutoff = 0.0;
  Index x_points = 0;
  double imag_residue = 0.0;
  /// integral of eta minus 1.
  double normalization_residual = 0.0;
  double min_eta = 0.0;
  /// integral of min(eta, 0), reported as a non-negative number.
  double negative_mass = 0.0;
};

/// Smallest X* with |F(x)| < decay_tol for all |x| >= X*.
double inversion_cutoff(const CharFnApprox& f, double decay_tol);

/// eta(p) = (1/2pi) integral F(x) e^{-ixp} dx by trapezoidal quadrature on
/// [-X*, X*]. Throws NumericError when F has not decayed at X* or when the
/// negative mass exceeds the budget.
DensityGrid charfn_to_density(const CharFnApprox& f, const DensityGridSpec& grid, const InversionSpec& spec = {});

/// Trapezoidal integral of p^m eta. Throws NumericError("insufficient
/// coverage") when the grid misses more than coverage_tol of the mass.
double density_moment(const DensityGrid& dg, int m, double coverage_tol = 1e-6);
MomentVector density_moments(const DensityGrid& dg, int n, double coverage_tol = 1e-6);

/// Closed-form normal density sampled on the grid.
DensityGrid gaussian_density(double mean, double variance, const DensityGridSpec& grid);

/// Density CSV: header `p,eta`.
std::string write_density_csv(const DensityGrid& dg);

}  // namespace mbstat
