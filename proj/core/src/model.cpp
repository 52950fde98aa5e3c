#include "branchmoments/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace branchmoments {

std::vector<std::string> validate_topology(const ModelTopology& topology) {
  std::vector<std::string> errors;
  if (topology.progenitors.empty()) errors.push_back("empty progenitor set");
  if (topology.matures.empty()) errors.push_back("empty mature set");

  std::set<std::string> seen{topology.hsc};
  for (const auto& id : topology.progenitors) {
    if (!seen.insert(id).second) errors.push_back("duplicate id '" + id + "'");
  }
  for (const auto& id : topology.matures) {
    if (!seen.insert(id).second) errors.push_back("duplicate id '" + id + "'");
  }

  const std::set<std::string> progs(topology.progenitors.begin(), topology.progenitors.end());
  const std::set<std::string> mats(topology.matures.begin(), topology.matures.end());
  std::set<std::string> with_children;
  for (const auto& m : topology.matures) {
    auto it = topology.parent.find(m);
    if (it == topology.parent.end()) {
      errors.push_back("orphan mature '" + m + "'");
    } else if (!progs.contains(it->second)) {
      errors.push_back("mature '" + m + "' has unknown parent '" + it->second + "'");
    } else {
      with_children.insert(it->second);
    }
  }
  for (const auto& [m, a] : topology.parent) {
    if (!mats.contains(m)) errors.push_back("parent entry for unknown mature '" + m + "'");
  }
  for (const auto& a : topology.progenitors) {
    if (!with_children.contains(a)) errors.push_back("empty progenitor '" + a + "' has no mature child");
  }
  return errors;
}

std::vector<std::size_t> ModelTopology::parent_indices() const {
  if (auto errors = validate_topology(*this); !errors.empty()) {
    std::string msg = "invalid topology:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw DomainError(msg);
  }
  std::vector<std::size_t> out;
  out.reserve(matures.size());
  for (const auto& m : matures) out.push_back(progenitor_index(parent.at(m)));
  return out;
}

std::size_t ModelTopology::mature_index(const std::string& id) const {
  auto it = std::find(matures.begin(), matures.end(), id);
  if (it == matures.end()) throw DomainError("unknown mature type '" + id + "'");
  return static_cast<std::size_t>(it - matures.begin());
}

std::size_t ModelTopology::progenitor_index(const std::string& id) const {
  auto it = std::find(progenitors.begin(), progenitors.end(), id);
  if (it == progenitors.end()) throw DomainError("unknown progenitor '" + id + "'");
  return static_cast<std::size_t>(it - progenitors.begin());
}

std::string ModelTopology::compartment_label(std::size_t c) const {
  if (c == 0) return hsc;
  if (c <= progenitors.size()) return progenitors[c - 1];
  return matures.at(c - 1 - progenitors.size());
}

ModelTopology canonical_model(const std::string& name) {
  using Partition = std::vector<std::vector<std::string>>;
  auto build = [](const Partition& parts, std::vector<std::string> matures) {
    ModelTopology t;
    t.matures = std::move(matures);
    const char* ids[] = {"a", "b", "c"};
    for (std::size_t i = 0; i < parts.size(); ++i) {
      t.progenitors.emplace_back(ids[i]);
      for (const auto& m : parts[i]) t.parent[m] = ids[i];
    }
    return t;
  };
  const std::vector<std::string> five = {"1", "2", "3", "4", "5"};
  if (name == "a") return build({{"1", "2", "3"}}, {"1", "2", "3"});
  if (name == "b") return build({five}, five);
  if (name == "c") return build({{"1", "2"}, {"3", "4", "5"}}, five);
  if (name == "d") return build({{"1", "2", "5"}, {"3", "4"}}, five);
  if (name == "e") return build({{"1", "2"}, {"3", "4"}, {"5"}}, five);
  if (name == "f") return build({{"1"}, {"2"}, {"3", "4", "5"}}, five);
  throw DomainError("unknown canonical model '" + name + "' (expected a..f)");
}

double Params::hsc_net_growth() const {
  return lambda - std::accumulate(nu_prog.begin(), nu_prog.end(), 0.0);
}

Params canonical_truth(const std::string& name) {
  Params p;
  if (name == "a") {
    p.lambda = 0.028;
    p.nu_prog = {0.02};
    p.mu_prog = {0.008};
    p.nu_mat = {36, 15, 7};
    p.mu_mat = {0.24, 0.14, 0.09};
    p.pi = {0.1, 0.9};
  } else if (name == "b") {
    p.lambda = 0.0285;
    p.nu_prog = {0.02};
    p.mu_prog = {0.008};
    p.nu_mat = {36, 15, 10, 20, 7};
    p.mu_mat = {0.26, 0.13, 0.11, 0.16, 0.09};
    p.pi = {0.1, 0.9};
  } else if (name == "c" || name == "d") {
    p.lambda = 0.0285;
    p.nu_prog = {0.013, 0.007};
    p.mu_prog = {0.005, 0.004};
    p.nu_mat = {36, 15, 10, 20, 7};
    p.mu_mat = {0.26, 0.13, 0.11, 0.16, 0.09};
    p.pi = {0.1, 0.6, 0.3};
  } else if (name == "e" || name == "f") {
    p.lambda = 0.05;
    p.nu_prog = {0.028, 0.014, 0.007};
    p.mu_prog = {0.008, 0.006, 0.002};
    p.nu_mat = {40, 18, 14, 20, 8};
    p.mu_mat = {0.24, 0.13, 0.12, 0.18, 0.1};
    p.pi = {0.1, 0.55, 0.2, 0.15};
  } else {
    throw DomainError("unknown canonical model '" + name + "' (expected a..f)");
  }
  return p;
}

std::vector<std::string> parameter_names(const ModelTopology& topology) {
  std::vector<std::string> names{"lambda"};
  for (const auto& a : topology.progenitors) names.push_back("nu_prog." + a);
  for (const auto& a : topology.progenitors) names.push_back("mu_prog." + a);
  for (const auto& m : topology.matures) names.push_back("nu_mat." + m);
  for (const auto& m : topology.matures) names.push_back("mu_mat." + m);
  names.push_back("pi." + topology.hsc);
  for (const auto& a : topology.progenitors) names.push_back("pi." + a);
  return names;
}

std::size_t num_rate_parameters(const ModelTopology& topology) {
  return 1 + 2 * topology.num_progenitors() + 2 * topology.num_matures();
}

std::vector<double> flatten(const Params& p) {
  std::vector<double> out{p.lambda};
  out.insert(out.end(), p.nu_prog.begin(), p.nu_prog.end());
  out.insert(out.end(), p.mu_prog.begin(), p.mu_prog.end());
  out.insert(out.end(), p.nu_mat.begin(), p.nu_mat.end());
  out.insert(out.end(), p.mu_mat.begin(), p.mu_mat.end());
  out.insert(out.end(), p.pi.begin(), p.pi.end());
  return out;
}

Params unflatten(const ModelTopology& topology, std::span<const double> flat) {
  const std::size_t A = topology.num_progenitors();
  const std::size_t M = topology.num_matures();
  if (flat.size() != num_rate_parameters(topology) + 1 + A) {
    throw DomainError("flat parameter vector has wrong length");
  }
  Params p;
  auto it = flat.begin();
  auto take = [&](std::size_t n) {
    std::vector<double> v(it, it + static_cast<std::ptrdiff_t>(n));
    it += static_cast<std::ptrdiff_t>(n);
    return v;
  };
  p.lambda = *it++;
  p.nu_prog = take(A);
  p.mu_prog = take(A);
  p.nu_mat = take(M);
  p.mu_mat = take(M);
  p.pi = take(1 + A);
  return p;
}

ParamMask ParamMask::all_free(const ModelTopology& topology) {
  return ParamMask{std::vector<bool>(parameter_names(topology).size(), false)};
}

ParamMask ParamMask::deaths_fixed(const ModelTopology& topology) {
  ParamMask mask = all_free(topology);
  const std::size_t first = 1 + 2 * topology.num_progenitors() + topology.num_matures();
  for (std::size_t m = 0; m < topology.num_matures(); ++m) mask.fixed[first + m] = true;
  return mask;
}

ParamMask ParamMask::from_names(const ModelTopology& topology, const std::vector<std::string>& names) {
  const auto all = parameter_names(topology);
  ParamMask mask = all_free(topology);
  for (const auto& n : names) {
    auto it = std::find(all.begin(), all.end(), n);
    if (it == all.end()) throw DomainError("unknown parameter name '" + n + "'");
    mask.fixed[static_cast<std::size_t>(it - all.begin())] = true;
  }
  return mask;
}

std::vector<std::string> ParamMask::fixed_names(const ModelTopology& topology) const {
  const auto all = parameter_names(topology);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < all.size() && i < fixed.size(); ++i) {
    if (fixed[i]) out.push_back(all[i]);
  }
  return out;
}

std::vector<std::string> validate_params(const ModelTopology& topology, const Params& p,
                                         bool growth_constraint) {
  std::vector<std::string> errors;
  const std::size_t A = topology.num_progenitors();
  const std::size_t M = topology.num_matures();
  if (p.nu_prog.size() != A || p.mu_prog.size() != A) errors.push_back("progenitor rate vectors must have length |A|");
  if (p.nu_mat.size() != M || p.mu_mat.size() != M) errors.push_back("mature rate vectors must have length M");
  if (p.pi.size() != 1 + A) errors.push_back("pi must have length 1 + |A|");
  if (!errors.empty()) return errors;

  const auto names = parameter_names(topology);
  const auto flat = flatten(p);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (!std::isfinite(flat[i])) errors.push_back(names[i] + " is not finite");
    else if (flat[i] < 0.0) errors.push_back("negative rate " + names[i]);
  }
  const double total = std::accumulate(p.pi.begin(), p.pi.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) errors.push_back("pi does not sum to 1");
  if (growth_constraint && p.hsc_net_growth() < 0.0) {
    errors.push_back("HSC net growth lambda - sum(nu_prog) is negative");
  }
  return errors;
}

std::vector<Reaction> build_reactions(const ModelTopology& topology, const Params& params) {
  const auto parents = topology.parent_indices();
  if (auto errors = validate_params(topology, params); !errors.empty()) {
    for (const auto& e : errors) {
      if (e.starts_with("negative rate")) throw DomainError(e);
    }
    throw DomainError(errors.front());
  }
  const std::size_t C = topology.num_compartments();
  const std::size_t A = topology.num_progenitors();
  const std::size_t M = topology.num_matures();

  std::vector<Reaction> out;
  out.reserve(1 + 2 * A + 2 * M);
  auto add = [&](std::size_t parent, double rate, std::initializer_list<std::pair<std::size_t, int>> changes) {
    Reaction r{parent, std::vector<int>(C, 0), rate};
    for (auto [c, d] : changes) r.delta[c] += d;
    out.push_back(std::move(r));
  };

  add(0, params.lambda, {{0, +1}});
  for (std::size_t a = 0; a < A; ++a) {
    add(0, params.nu_prog[a], {{0, -1}, {topology.progenitor_compartment(a), +1}});
  }
  for (std::size_t a = 0; a < A; ++a) {
    add(topology.progenitor_compartment(a), params.mu_prog[a], {{topology.progenitor_compartment(a), -1}});
  }
  for (std::size_t m = 0; m < M; ++m) {
    add(topology.progenitor_compartment(parents[m]), params.nu_mat[m], {{topology.mature_compartment(m), +1}});
  }
  for (std::size_t m = 0; m < M; ++m) {
    add(topology.mature_compartment(m), params.mu_mat[m], {{topology.mature_compartment(m), -1}});
  }
  return out;
}

std::vector<double> gamma_to_pi(std::span<const double> gamma) {
  for (double g : gamma) {
    if (!std::isfinite(g)) throw DomainError("gamma entries must be finite");
  }
  // Shift by the max exponent so large gammas do not overflow.
  double shift = 0.0;
  for (double g : gamma) shift = std::max(shift, g);
  std::vector<double> pi(gamma.size() + 1);
  double denom = std::exp(-shift);
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    pi[i] = std::exp(gamma[i] - shift);
    denom += pi[i];
  }
  pi.back() = std::exp(-shift);
  for (double& v : pi) v /= denom;
  return pi;
}

std::vector<double> pi_to_gamma(std::span<const double> pi) {
  if (pi.size() < 2) throw DomainError("pi_to_gamma needs at least two components");
  for (double v : pi) {
    if (!(v > 0.0)) throw DomainError("boundary: pi_to_gamma requires strictly positive pi");
  }
  std::vector<double> gamma(pi.size() - 1);
  const double last = std::log(pi.back());
  for (std::size_t i = 0; i + 1 < pi.size(); ++i) gamma[i] = std::log(pi[i]) - last;
  return gamma;
}

}  // namespace branchmoments
