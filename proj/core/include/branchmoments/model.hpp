#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace branchmoments {

/// Raised for invalid models, data or configuration (as opposed to programming errors).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Three-stage differentiation tree: one HSC compartment, progenitors, mature types.
///
/// Compartments are ordered (HSC, progenitors in declaration order, matures in
/// declaration order) everywhere in the library, including file I/O.
struct ModelTopology {
  std::string hsc = "HSC";
  std::vector<std::string> progenitors;
  std::vector<std::string> matures;
  /// mature id -> progenitor id
  std::map<std::string, std::string> parent;

  std::size_t num_progenitors() const { return progenitors.size(); }
  std::size_t num_matures() const { return matures.size(); }
  /// C = 1 + |A| + M
  std::size_t num_compartments() const { return 1 + progenitors.size() + matures.size(); }
  /// K = 1 + |A|, the compartments a lineage may start in.
  std::size_t num_initial() const { return 1 + progenitors.size(); }

  std::size_t progenitor_compartment(std::size_t a) const { return 1 + a; }
  std::size_t mature_compartment(std::size_t m) const { return 1 + progenitors.size() + m; }

  /// Progenitor index of every mature type. Throws DomainError on an invalid topology.
  std::vector<std::size_t> parent_indices() const;
  std::size_t mature_index(const std::string& id) const;
  std::size_t progenitor_index(const std::string& id) const;
  std::string compartment_label(std::size_t c) const;
};

/// Empty result means the topology is valid.
std::vector<std::string> validate_topology(const ModelTopology& topology);

/// Canonical trees "a".."f".
ModelTopology canonical_model(const std::string& name);

/// Branching rates, in events per five days, plus the initial distribution.
struct Params {
  double lambda = 0.0;
  std::vector<double> nu_prog;
  std::vector<double> mu_prog;
  std::vector<double> nu_mat;
  std::vector<double> mu_mat;
  /// over (HSC, progenitors...)
  std::vector<double> pi;

  /// HSC net growth kappa_00 = lambda - sum_a nu_a.
  double hsc_net_growth() const;
};

/// Simulation truth for the canonical trees. (c) has no mature death rates of its
/// own and borrows those of (b); (d) and (e) reuse the rates of (c) and (f).
Params canonical_truth(const std::string& name);

/// Flat parameter layout used by masks, CSV output and the estimator:
/// lambda, nu_prog.*, mu_prog.*, nu_mat.*, mu_mat.*, pi.*
std::vector<std::string> parameter_names(const ModelTopology& topology);
std::vector<double> flatten(const Params& params);
Params unflatten(const ModelTopology& topology, std::span<const double> flat);
/// Number of rate entries at the front of the flat layout (everything but pi).
std::size_t num_rate_parameters(const ModelTopology& topology);

/// Per-entry fixed flags in the flat layout.
struct ParamMask {
  std::vector<bool> fixed;

  static ParamMask all_free(const ModelTopology& topology);
  /// Mature death rates fixed, everything else free.
  static ParamMask deaths_fixed(const ModelTopology& topology);
  static ParamMask from_names(const ModelTopology& topology, const std::vector<std::string>& names);
  std::vector<std::string> fixed_names(const ModelTopology& topology) const;
};

std::vector<std::string> validate_params(const ModelTopology& topology, const Params& params,
                                         bool growth_constraint = false);

/// One reaction channel of the kinetics representation.
struct Reaction {
  std::size_t parent = 0;
  std::vector<int> delta;
  double rate_per_cell = 0.0;
};

/// 1 + 2|A| + 2M reactions: self-renewal, HSC differentiations, progenitor deaths,
/// mature productions (progenitor kept), mature deaths.
std::vector<Reaction> build_reactions(const ModelTopology& topology, const Params& params);

/// Multinomial-logit map from K-1 reals to the interior of the K-simplex.
std::vector<double> gamma_to_pi(std::span<const double> gamma);
/// Inverse of gamma_to_pi; throws DomainError("boundary") if some pi_i is 0.
std::vector<double> pi_to_gamma(std::span<const double> pi);

}  // namespace branchmoments
