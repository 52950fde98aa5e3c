#pragma once

#include <span>
#include <vector>

#include "branchmoments/double_double.hpp"

namespace branchmoments {

/// Exact exponential polynomial f(t) = sum_i c_i * t^k_i * exp(r_i * t).
///
/// Always normalized: terms sorted by (rate, power), no two terms share
/// (power, rate), rates within kRateTolerance of each other are merged and
/// rates within kRateTolerance of zero are snapped to zero, and terms with
/// |c| < kPruneRelative * max|c| are dropped. The class is closed under the
/// operations the moment cascade needs, so coinciding rates produce t^k
/// resonance terms instead of divisions by zero.
///
/// Coefficients and rates are stored in double-double. Nearby rates give
/// coefficients of order 1/(r_i - r_j)^k that cancel almost completely when
/// (r_i - r_j) t is small; evaluation first runs in double and repeats in
/// double-double when the cancellation would cost more than kCancellationLimit.
class ExpSum {
 public:
  struct Term {
    DoubleDouble coef;
    int power = 0;
    DoubleDouble rate;
  };

  static constexpr double kRateTolerance = 1e-12;
  static constexpr double kPruneRelative = 1e-30;
  static constexpr double kCancellationLimit = 1e6;
  static constexpr int kMaxPower = 8;

  ExpSum() = default;
  explicit ExpSum(std::vector<Term> terms);

  static ExpSum constant(double c);
  static ExpSum exponential(double rate, double coef = 1.0);
  static ExpSum monomial(double coef, int power, double rate);

  std::span<const Term> terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int max_power() const;

  /// Evaluates with one exp() per distinct rate.
  double operator()(double t) const;
  /// Evaluation entirely in double-double.
  DoubleDouble eval_extended(double t) const;

  ExpSum& operator+=(const ExpSum& other);
  ExpSum& operator*=(double c);

  friend ExpSum operator+(ExpSum f, const ExpSum& g) { return f += g; }
  friend ExpSum operator-(ExpSum f, const ExpSum& g) { return f += g * -1.0; }
  friend ExpSum operator*(ExpSum f, double c) { return f *= c; }
  friend ExpSum operator*(double c, ExpSum f) { return f *= c; }
  friend ExpSum operator*(const ExpSum& f, const ExpSum& g);

 private:
  void normalize();
  std::vector<Term> terms_;
};

inline ExpSum add(const ExpSum& f, const ExpSum& g) { return f + g; }
inline ExpSum scale(const ExpSum& f, double c) { return f * c; }
inline ExpSum mul(const ExpSum& f, const ExpSum& g) { return f * g; }
inline double eval(const ExpSum& f, double t) { return f(t); }

/// F(t) = integral of f over [0, t].
ExpSum integrate0(const ExpSum& f);

/// Termwise d/dt.
ExpSum derivative(const ExpSum& f);

/// Unique solution of y' = kappa * y + forcing, y(0) = y0, i.e.
/// y(t) = e^{kappa t} (y0 + int_0^t e^{-kappa x} forcing(x) dx).
/// Forcing terms whose rate matches kappa raise the power by one.
ExpSum solve_linear_ode(DoubleDouble kappa, const ExpSum& forcing, double y0);

}  // namespace branchmoments
