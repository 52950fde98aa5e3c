#include "branchmoments/expsum.hpp"

#include <algorithm>
#include <cmath>

#include "branchmoments/model.hpp"

namespace branchmoments {

namespace {

void check_power(int power) {
  if (power > ExpSum::kMaxPower) {
    throw DomainError("ExpSum power cap exceeded (t^" + std::to_string(power) + ")");
  }
}

bool dd_is_zero(DoubleDouble x) { return x.hi == 0.0 && x.lo == 0.0; }

bool within_tolerance(DoubleDouble a, DoubleDouble b) {
  return std::abs(static_cast<double>(a - b)) <= ExpSum::kRateTolerance;
}

DoubleDouble int_power(DoubleDouble t, int k) {
  DoubleDouble out(1.0);
  for (int i = 0; i < k; ++i) out *= t;
  return out;
}

}  // namespace

ExpSum::ExpSum(std::vector<Term> terms) : terms_(std::move(terms)) { normalize(); }

ExpSum ExpSum::constant(double c) { return ExpSum({{c, 0, 0.0}}); }

ExpSum ExpSum::exponential(double rate, double coef) { return ExpSum({{coef, 0, rate}}); }

ExpSum ExpSum::monomial(double coef, int power, double rate) {
  if (power < 0) throw DomainError("ExpSum power must be nonnegative");
  return ExpSum({{coef, power, rate}});
}

int ExpSum::max_power() const {
  int p = 0;
  for (const auto& term : terms_) p = std::max(p, term.power);
  return p;
}

void ExpSum::normalize() {
  for (auto& term : terms_) {
    check_power(term.power);
    if (std::abs(static_cast<double>(term.rate)) <= kRateTolerance) term.rate = 0.0;
  }
  std::sort(terms_.begin(), terms_.end(),
            [](const Term& a, const Term& b) { return a.rate < b.rate || (a.rate == b.rate && a.power < b.power); });

  // Cluster rates against the first rate of each group; the group takes that rate
  // (or zero when the group contains zero).
  std::vector<Term> merged;
  merged.reserve(terms_.size());
  std::size_t i = 0;
  while (i < terms_.size()) {
    std::size_t j = i;
    const DoubleDouble anchor = terms_[i].rate;
    bool has_zero = false;
    while (j < terms_.size() && within_tolerance(terms_[j].rate, anchor)) {
      has_zero = has_zero || dd_is_zero(terms_[j].rate);
      ++j;
    }
    const DoubleDouble rate = has_zero ? DoubleDouble(0.0) : anchor;
    const std::size_t begin = merged.size();
    for (std::size_t k = i; k < j; ++k) {
      auto it = std::find_if(merged.begin() + static_cast<std::ptrdiff_t>(begin), merged.end(),
                             [&](const Term& t) { return t.power == terms_[k].power; });
      if (it == merged.end()) {
        merged.push_back({terms_[k].coef, terms_[k].power, rate});
      } else {
        it->coef += terms_[k].coef;
      }
    }
    std::sort(merged.begin() + static_cast<std::ptrdiff_t>(begin), merged.end(),
              [](const Term& a, const Term& b) { return a.power < b.power; });
    i = j;
  }

  double largest = 0.0;
  for (const auto& term : merged) largest = std::max(largest, std::abs(term.coef.hi));
  const double cutoff = kPruneRelative * largest;
  std::erase_if(merged, [&](const Term& t) { return dd_is_zero(t.coef) || std::abs(t.coef.hi) < cutoff; });
  terms_ = std::move(merged);
}

double ExpSum::operator()(double t) const {
  double total = 0.0;
  double magnitude = 0.0;
  std::size_t i = 0;
  while (i < terms_.size()) {
    const double rate = terms_[i].rate.hi;
    const double e = rate == 0.0 ? 1.0 : std::exp(rate * t);
    for (; i < terms_.size() && terms_[i].rate.hi == rate; ++i) {
      const auto& term = terms_[i];
      const double v = (term.power == 0 ? term.coef.hi : term.coef.hi * std::pow(t, term.power)) * e;
      total += v;
      magnitude += std::abs(v);
    }
  }
  if (magnitude > kCancellationLimit * std::abs(total) && std::isfinite(magnitude)) {
    return static_cast<double>(eval_extended(t));
  }
  return total;
}

DoubleDouble ExpSum::eval_extended(double t) const {
  DoubleDouble total(0.0);
  std::size_t i = 0;
  while (i < terms_.size()) {
    const DoubleDouble rate = terms_[i].rate;
    DoubleDouble poly(0.0);
    for (; i < terms_.size() && terms_[i].rate == rate; ++i) {
      const auto& term = terms_[i];
      poly += term.power == 0 ? term.coef : term.coef * int_power(t, term.power);
    }
    total += dd_is_zero(rate) ? poly : poly * exp(rate * DoubleDouble(t));
  }
  return total;
}

ExpSum& ExpSum::operator+=(const ExpSum& other) {
  terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
  normalize();
  return *this;
}

ExpSum& ExpSum::operator*=(double c) {
  if (c == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& term : terms_) term.coef *= c;
  return *this;
}

ExpSum operator*(const ExpSum& f, const ExpSum& g) {
  std::vector<ExpSum::Term> out;
  out.reserve(f.terms_.size() * g.terms_.size());
  for (const auto& a : f.terms_) {
    for (const auto& b : g.terms_) {
      out.push_back({a.coef * b.coef, a.power + b.power, a.rate + b.rate});
    }
  }
  return ExpSum(std::move(out));
}

ExpSum derivative(const ExpSum& f) {
  std::vector<ExpSum::Term> out;
  for (const auto& term : f.terms()) {
    if (!dd_is_zero(term.rate)) out.push_back({term.coef * term.rate, term.power, term.rate});
    if (term.power > 0) out.push_back({term.coef * DoubleDouble(term.power), term.power - 1, term.rate});
  }
  return ExpSum(std::move(out));
}

ExpSum solve_linear_ode(DoubleDouble kappa, const ExpSum& forcing, double y0) {
  // y(t) = y0 e^{kappa t} + sum over forcing terms of the particular solution with
  // zero initial value. For c t^k e^{r t} with s = r - kappa != 0:
  //   e^{kappa t} int_0^t c x^k e^{s x} dx
  //     = c e^{r t} sum_j (-1)^{k-j} k!/j! t^j / s^{k-j+1}  -  c (-1)^k k!/s^{k+1} e^{kappa t}
  // and for s == 0 (resonance): c t^{k+1}/(k+1) e^{kappa t}.
  std::vector<ExpSum::Term> out;
  out.push_back({y0, 0, kappa});
  for (const auto& term : forcing.terms()) {
    const DoubleDouble s = term.rate - kappa;
    const int k = term.power;
    if (std::abs(static_cast<double>(s)) <= ExpSum::kRateTolerance) {
      check_power(k + 1);
      out.push_back({term.coef / DoubleDouble(k + 1), k + 1, kappa});
      continue;
    }
    // factor = (-1)^{k-j} k!/j! / s^{k-j+1}, built from j = k downward.
    DoubleDouble factor = DoubleDouble(1.0) / s;
    for (int j = k; j >= 0; --j) {
      out.push_back({term.coef * factor, j, term.rate});
      if (j > 0) factor = factor * DoubleDouble(-static_cast<double>(j)) / s;
    }
    // factor now holds (-1)^k k!/s^{k+1}.
    out.push_back({-(term.coef * factor), 0, kappa});
  }
  return ExpSum(std::move(out));
}

ExpSum integrate0(const ExpSum& f) { return solve_linear_ode(0.0, f, 0.0); }

}  // namespace branchmoments
