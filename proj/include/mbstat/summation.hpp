#pragma once

#include <cmath>
#include <iterator>
#include <type_traits>
#include <utility>
#include <vector>

namespace mbstat {

/// Kahan-Babuska (Neumaier) compensated accumulator. Reduction order is the
/// order of add() calls.
template <typename Scalar>
class NeumaierSum {
 public:
  void add(Scalar x) {
    const Scalar t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  NeumaierSum& operator+=(Scalar x) {
    add(x);
    return *this;
  }

  Scalar value() const { return sum_ + compensation_; }

 private:
  Scalar sum_{0};
  Scalar compensation_{0};
};

template <typename Range>
auto compensated_sum(const Range& values) {
  using Scalar = std::decay_t<decltype(*std::begin(values))>;
  NeumaierSum<Scalar> acc;
  for (const auto& v : values) acc.add(v);
  return acc.value();
}

/// Exact floating-point accumulator (Shewchuk non-overlapping expansions, the
/// algorithm behind Python's math.fsum). The running sum is held without any
/// rounding error, so value() is the correctly rounded sum of every input and
/// the result does not depend on the order of add() or merge() calls.
class ExactSum {
 public:
  void add(double x) {
    if (!std::isfinite(x)) {
      special_ += x;
      return;
    }
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  ExactSum& operator+=(double x) {
    add(x);
    return *this;
  }

  void merge(const ExactSum& other) {
    for (double p : other.partials_) add(p);
    special_ += other.special_;
  }

  double value() const {
    if (special_ != 0.0 || std::isnan(special_)) return special_;
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Round half-even across the remaining partials.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) ||
                  (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      const double yr = x - hi;
      if (y == yr) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
  double special_ = 0.0;
};

}  // namespace mbstat
