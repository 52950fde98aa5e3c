#pragma once

#include <cmath>

namespace branchmoments {

/// Unevaluated sum hi + lo of two doubles (about 32 significant digits).
/// Used by ExpSum, whose coefficients carry divided differences of nearby
/// rates and cancel heavily at small t.
struct DoubleDouble {
  double hi = 0.0;
  double lo = 0.0;

  constexpr DoubleDouble() = default;
  constexpr DoubleDouble(double v) : hi(v), lo(0.0) {}  // NOLINT(google-explicit-constructor)
  constexpr DoubleDouble(double h, double l) : hi(h), lo(l) {}

  explicit operator double() const { return hi + lo; }
};

namespace dd_detail {

inline DoubleDouble quick_two_sum(double a, double b) {
  const double s = a + b;
  return {s, b - (s - a)};
}

inline DoubleDouble two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

inline DoubleDouble two_prod(double a, double b) {
  const double p = a * b;
  return {p, std::fma(a, b, -p)};
}

}  // namespace dd_detail

inline DoubleDouble operator-(DoubleDouble a) { return {-a.hi, -a.lo}; }

inline DoubleDouble operator+(DoubleDouble a, DoubleDouble b) {
  DoubleDouble s = dd_detail::two_sum(a.hi, b.hi);
  const DoubleDouble t = dd_detail::two_sum(a.lo, b.lo);
  s.lo += t.hi;
  s = dd_detail::quick_two_sum(s.hi, s.lo);
  s.lo += t.lo;
  return dd_detail::quick_two_sum(s.hi, s.lo);
}

inline DoubleDouble operator-(DoubleDouble a, DoubleDouble b) { return a + (-b); }

inline DoubleDouble operator*(DoubleDouble a, DoubleDouble b) {
  DoubleDouble p = dd_detail::two_prod(a.hi, b.hi);
  p.lo += a.hi * b.lo + a.lo * b.hi;
  return dd_detail::quick_two_sum(p.hi, p.lo);
}

inline DoubleDouble operator/(DoubleDouble a, DoubleDouble b) {
  const double q1 = a.hi / b.hi;
  DoubleDouble r = a - b * DoubleDouble(q1);
  const double q2 = r.hi / b.hi;
  r = r - b * DoubleDouble(q2);
  const double q3 = r.hi / b.hi;
  return dd_detail::quick_two_sum(q1, q2) + DoubleDouble(q3);
}

inline DoubleDouble& operator+=(DoubleDouble& a, DoubleDouble b) { return a = a + b; }
inline DoubleDouble& operator*=(DoubleDouble& a, DoubleDouble b) { return a = a * b; }

inline bool operator==(DoubleDouble a, DoubleDouble b) { return a.hi == b.hi && a.lo == b.lo; }
inline bool operator<(DoubleDouble a, DoubleDouble b) { return a.hi < b.hi || (a.hi == b.hi && a.lo < b.lo); }

inline DoubleDouble abs(DoubleDouble a) { return a.hi < 0.0 || (a.hi == 0.0 && a.lo < 0.0) ? -a : a; }

inline DoubleDouble ldexp(DoubleDouble a, int e) { return {std::ldexp(a.hi, e), std::ldexp(a.lo, e)}; }

/// exp in double-double: x = k ln2 + r, r scaled by 2^-10, Taylor series, then squaring.
inline DoubleDouble exp(DoubleDouble x) {
  if (x.hi > 709.0) return {HUGE_VAL, 0.0};
  if (x.hi < -745.0) return {0.0, 0.0};
  if (x.hi == 0.0 && x.lo == 0.0) return {1.0, 0.0};
  constexpr DoubleDouble kLn2{6.931471805599452862e-01, 2.319046813846299558e-17};
  const double k = std::nearbyint(x.hi / kLn2.hi);
  const DoubleDouble r = ldexp(x - kLn2 * DoubleDouble(k), -10);
  // s = e^r - 1
  DoubleDouble term = r;
  DoubleDouble s = r;
  for (int n = 2; n < 30; ++n) {
    term = term * r / DoubleDouble(static_cast<double>(n));
    s += term;
    if (std::abs(term.hi) < 1e-36) break;
  }
  for (int i = 0; i < 10; ++i) s = DoubleDouble(2.0) * s + s * s;
  return ldexp(s + DoubleDouble(1.0), static_cast<int>(k));
}

}  // namespace branchmoments
