#pragma once

// Hand-transcribed second factorial moments of the four-type chain
// HSC (1) -> progenitor (2) -> matures (3, 4), evaluated in long double.
//
// Rates: lambda (self-renewal), nu0 (HSC -> progenitor), mu0 (progenitor death),
// nu1/nu2 (mature 3/4 production), mu1/mu2 (mature 3/4 death).
//
// The uncorrected progenitor-source forms do not vanish at t = 0. The corrected
// versions flip the sign of the leading exponential, use mu1 (not mu2) in U33|2,
// and use (mu0 - mu1) in the constant of the second U34|2 bracket. The HSC-source
// forms need no correction.

#include <algorithm>
#include <cmath>
#include <vector>

#include "branchmoments/model.hpp"
#include "branchmoments/rng.hpp"

namespace four_type {

using R = long double;

struct Rates {
  R lambda, nu0, mu0, nu1, nu2, mu1, mu2;
};

inline branchmoments::ModelTopology topology() {
  branchmoments::ModelTopology t;
  t.progenitors = {"2"};
  t.matures = {"3", "4"};
  t.parent = {{"3", "2"}, {"4", "2"}};
  return t;
}

inline branchmoments::Params params(const Rates& r) {
  branchmoments::Params p;
  p.lambda = static_cast<double>(r.lambda);
  p.nu_prog = {static_cast<double>(r.nu0)};
  p.mu_prog = {static_cast<double>(r.mu0)};
  p.nu_mat = {static_cast<double>(r.nu1), static_cast<double>(r.nu2)};
  p.mu_mat = {static_cast<double>(r.mu1), static_cast<double>(r.mu2)};
  p.pi = {0.5, 0.5};
  return p;
}

// --- uncorrected ------------------------------------------------------------

inline R U33_2_uncorrected(const Rates& r, R t) {
  const R m0 = r.mu0, m2 = r.mu2;
  return 2 * r.nu1 * r.nu1 / (m2 - m0) *
         (std::exp(-(m0 + m2) * t) / m2 - std::exp(-2 * m2 * t) / (m0 - 2 * m2) +
          (m0 - m2) * std::exp(-m0 * t) / (m2 * (m0 - 2 * m2)));
}

inline R U44_2_uncorrected(const Rates& r, R t) {
  const R m0 = r.mu0, m2 = r.mu2;
  return 2 * r.nu2 * r.nu2 / (m2 - m0) *
         (std::exp(-(m0 + m2) * t) / m2 - std::exp(-2 * m2 * t) / (m0 - 2 * m2) +
          (m0 - m2) * std::exp(-m0 * t) / (m2 * (m0 - 2 * m2)));
}

inline R U34_2_uncorrected(const Rates& r, R t) {
  const R m0 = r.mu0, m1 = r.mu1, m2 = r.mu2, k = r.nu1 * r.nu2;
  return k / (m2 - m0) *
             (std::exp(-(m0 + m1) * t) / m1 - std::exp(-(m1 + m2) * t) / (m0 - m1 - m2) +
              (m0 - m2) * std::exp(-m0 * t) / (m1 * (m0 - m1 - m2))) +
         k / (m1 - m0) *
             (std::exp(-(m0 + m2) * t) / m2 - std::exp(-(m1 + m2) * t) / (m0 - m1 - m2) +
              (m0 - m2) * std::exp(-m0 * t) / (m2 * (m0 - m1 - m2)));
}

// --- corrected progenitor-source forms ---------------------------------------

inline R U33_2(const Rates& r, R t) {
  const R m0 = r.mu0, m1 = r.mu1;
  return 2 * r.nu1 * r.nu1 / (m1 - m0) *
         (-std::exp(-(m0 + m1) * t) / m1 - std::exp(-2 * m1 * t) / (m0 - 2 * m1) +
          (m0 - m1) * std::exp(-m0 * t) / (m1 * (m0 - 2 * m1)));
}

inline R U44_2(const Rates& r, R t) {
  const R m0 = r.mu0, m2 = r.mu2;
  return 2 * r.nu2 * r.nu2 / (m2 - m0) *
         (-std::exp(-(m0 + m2) * t) / m2 - std::exp(-2 * m2 * t) / (m0 - 2 * m2) +
          (m0 - m2) * std::exp(-m0 * t) / (m2 * (m0 - 2 * m2)));
}

inline R U34_2(const Rates& r, R t) {
  const R m0 = r.mu0, m1 = r.mu1, m2 = r.mu2, k = r.nu1 * r.nu2;
  return k / (m2 - m0) *
             (-std::exp(-(m0 + m1) * t) / m1 - std::exp(-(m1 + m2) * t) / (m0 - m1 - m2) +
              (m0 - m2) * std::exp(-m0 * t) / (m1 * (m0 - m1 - m2))) +
         k / (m1 - m0) *
             (-std::exp(-(m0 + m2) * t) / m2 - std::exp(-(m1 + m2) * t) / (m0 - m1 - m2) +
              (m0 - m1) * std::exp(-m0 * t) / (m2 * (m0 - m1 - m2)));
}

// --- HSC-source forms ---------------------------------------------------------

// U33|1 for which = 1, U44|1 for which = 2.
inline R Umm_1(const Rates& r, R t, int which) {
  const R lam = r.lambda, n0 = r.nu0, m0 = r.mu0;
  const R nu = which == 1 ? r.nu1 : r.nu2;
  const R mu = which == 1 ? r.mu1 : r.mu2;
  const R d = n0 - lam;
  const R a = 2 * n0 * nu * nu / (mu - m0) *
              ((m0 - mu) * std::exp((d - m0) * t) / (mu * (m0 - 2 * mu) * (d - m0)) -
               std::exp((d - m0 - mu) * t) / (mu * (d - m0 - mu)) -
               std::exp((d - 2 * mu) * t) / ((m0 - 2 * mu) * (d - 2 * mu)) + (mu - m0) / (mu * (m0 - 2 * mu) * (d - m0)) +
               1 / (mu * (d - m0 - mu)) + 1 / ((m0 - 2 * mu) * (d - 2 * mu)));
  const R b =
      2 * lam * n0 * n0 * nu * nu / ((mu - m0) * (mu - m0)) *
      (std::exp((d - 2 * m0) * t) / ((d - m0) * (d - m0) * (d - 2 * m0)) -
       2 * std::exp((d - m0 - mu) * t) / ((d - m0) * (d - mu) * (d - m0 - mu)) +
       2 * (m0 - mu) * std::exp(-m0 * t) / (m0 * (d - mu) * (d - m0) * (d - m0)) +
       std::exp((d - 2 * mu) * t) / ((d - mu) * (d - mu) * (d - 2 * mu)) +
       2 * (mu - m0) * std::exp(-mu * t) / (mu * (d - mu) * (d - mu) * (d - m0)) +
       (mu - m0) * (mu - m0) * std::exp((lam - n0) * t) / ((lam - n0) * (d - mu) * (d - mu) * (d - m0) * (d - m0)) -
       1 / ((d - m0) * (d - m0) * (d - 2 * m0)) + 2 / ((d - m0) * (d - mu) * (d - m0 - mu)) -
       2 * (m0 - mu) / (m0 * (d - mu) * (d - m0) * (d - m0)) - 1 / ((d - mu) * (d - mu) * (d - 2 * mu)) -
       2 * (mu - m0) / (mu * (d - mu) * (d - mu) * (d - m0)) -
       (mu - m0) * (mu - m0) / ((lam - n0) * (d - mu) * (d - mu) * (d - m0) * (d - m0)));
  return std::exp((lam - n0) * t) * (a + b);
}

inline R U33_1(const Rates& r, R t) { return Umm_1(r, t, 1); }
inline R U44_1(const Rates& r, R t) { return Umm_1(r, t, 2); }

inline R U34_1(const Rates& r, R t) {
  const R lam = r.lambda, n0 = r.nu0, m0 = r.mu0, m1 = r.mu1, m2 = r.mu2;
  const R d = n0 - lam, k = n0 * r.nu1 * r.nu2;
  const R a1 = k / (m2 - m0) *
               ((m0 - m2) * std::exp((d - m0) * t) / (m1 * (m0 - m1 - m2) * (d - m0)) -
                std::exp((d - m1 - m0) * t) / (m1 * (d - m1 - m0)) -
                std::exp((d - m1 - m2) * t) / ((m0 - m1 - m2) * (d - m1 - m2)) +
                (m2 - m0) / (m1 * (m0 - m1 - m2) * (d - m0)) + 1 / (m1 * (d - m1 - m0)) +
                1 / ((m0 - m1 - m2) * (d - m1 - m2)));
  const R a2 = k / (m1 - m0) *
               ((m0 - m1) * std::exp((d - m0) * t) / (m2 * (m0 - m1 - m2) * (d - m0)) -
                std::exp((d - m2 - m0) * t) / (m2 * (d - m2 - m0)) -
                std::exp((d - m1 - m2) * t) / ((m0 - m1 - m2) * (d - m1 - m2)) +
                (m1 - m0) / (m2 * (m0 - m1 - m2) * (d - m0)) + 1 / (m2 * (d - m2 - m0)) +
                1 / ((m0 - m1 - m2) * (d - m1 - m2)));
  const R d0 = d - m0, d1 = d - m1, d2 = d - m2;
  const R b = 2 * lam * n0 * n0 * r.nu1 * r.nu2 / ((m1 - m0) * (m2 - m0)) *
              (std::exp((d - 2 * m0) * t) / ((d - 2 * m0) * d0 * d0) -
               std::exp((d - m0 - m2) * t) / (d0 * d2 * (d - m0 - m2)) +
               (m0 - m2) * std::exp(-m0 * t) / (m0 * d0 * d0 * d2) -
               std::exp((d - m0 - m1) * t) / (d0 * d1 * (d - m0 - m1)) +
               std::exp((d - m1 - m2) * t) / (d1 * d2 * (d - m1 - m2)) +
               (m2 - m0) * std::exp(-m1 * t) / (m1 * d1 * d2 * d0) +
               (m0 - m1) * std::exp(-m0 * t) / (m0 * d0 * d0 * d1) +
               (m1 - m0) * std::exp(-m2 * t) / (m2 * d1 * d2 * d0) +
               (m1 - m0) * (m2 - m0) * std::exp((lam - n0) * t) / ((lam - n0) * d0 * d0 * d1 * d2) -
               1 / (d0 * d0 * (d - 2 * m0)) + 1 / (d0 * d2 * (d - m0 - m2)) - (m0 - m2) / (m0 * d0 * d0 * d2) +
               1 / (d0 * d1 * (d - m0 - m1)) - 1 / (d1 * d2 * (d - m1 - m2)) + (m0 - m2) / (m1 * d1 * d2 * d0) +
               (m1 - m0) / (m0 * d0 * d0 * d1) + (m0 - m1) / (m2 * d1 * d2 * d0) -
               (m1 - m0) * (m2 - m0) / ((lam - n0) * d0 * d0 * d1 * d2));
  return std::exp((lam - n0) * t) * (a1 + a2 + b);
}

/// Smallest |denominator| relative to the largest rate; the transcriptions are
/// only usable away from coincidences.
inline R separation(const Rates& r) {
  const R lam = r.lambda, n0 = r.nu0, m0 = r.mu0, m1 = r.mu1, m2 = r.mu2, d = n0 - lam;
  const R dens[] = {m1 - m0,     m2 - m0,     m0 - 2 * m1, m0 - 2 * m2, m0 - m1 - m2, d - m0,
                    d - m1,      d - m2,      d - 2 * m0,  d - 2 * m1,  d - 2 * m2,   d - m0 - m1,
                    d - m0 - m2, d - m1 - m2, lam - n0};
  R scale = 0, lo = INFINITY;
  for (R x : {lam, n0, m0, m1, m2}) scale = std::max(scale, x);
  for (R x : dens) lo = std::min(lo, std::abs(x));
  return lo / scale;
}

/// Log-uniform rates in [0.05, 2], keeping draws with separation >= min_separation.
inline std::vector<Rates> grid(std::size_t n, std::uint64_t seed, R min_separation = 0.1) {
  branchmoments::Rng rng(seed);
  auto draw = [&] { return static_cast<R>(0.05 * std::exp(rng.uniform() * std::log(40.0))); };
  std::vector<Rates> out;
  while (out.size() < n) {
    Rates r{draw(), draw(), draw(), draw(), draw(), draw(), draw()};
    if (separation(r) >= min_separation) out.push_back(r);
  }
  return out;
}

inline const std::vector<double>& grid_times() {
  static const std::vector<double> times = {1.0, 2.0, 5.0, 10.0};
  return times;
}

}  // namespace four_type
