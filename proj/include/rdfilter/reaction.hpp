#pragma once

// Chemical reaction networks with mass-action kinetics, plus the scaled
// two-species Oregonator used by the simulation and filtering pipeline.

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rdf {

// General network: N_R reactions over N_S named species. Stoichiometric
// coefficients are nonnegative integers; rate constants are nonnegative.
struct ReactionNetwork {
    std::vector<std::string> species;
    std::vector<std::vector<int>> reactant_stoich; // [n_reactions][n_species]
    std::vector<std::vector<int>> product_stoich;  // [n_reactions][n_species]
    std::vector<double> rates;

    int n_species() const noexcept { return static_cast<int>(species.size()); }
    int n_reactions() const noexcept { return static_cast<int>(rates.size()); }

    // Throws UsageError on dimension mismatches, negative entries, duplicate
    // or malformed species names.
    void validate() const;
};

// Mass-action reaction rates: nu_r = kappa_r * prod_s z_s^{reactant_stoich[r][s]},
// with 0^0 = 1 so zeroth-order source reactions are representable.
std::vector<double> mass_action_rates(const ReactionNetwork& net, std::span<const double> z);

// Net concentration drift (product_stoich - reactant_stoich)^T * nu(z).
std::vector<double> stoichiometric_drift(const ReactionNetwork& net, std::span<const double> z);

// Text format (see README for the grammar):
//   # comment
//   species X Y Z
//   reaction <rate> : 2 X + Y -> 3 Z
// Either side of "->" may be empty; coefficients default to 1.
ReactionNetwork parse_network(const std::string& text);
std::string serialize_network(const ReactionNetwork& net);
ReactionNetwork load_network(const std::string& path);
void save_network(const ReactionNetwork& net, const std::string& path);

// Scaled two-species Oregonator (activator z1, inhibitor z2).
struct OregonatorParams {
    double epsilon = 0.08;
    double sigma = 0.95;
    double q = 0.0075;
    double d1 = 5e-4;
    double d2 = 5e-6;

    bool operator==(const OregonatorParams&) const = default;
};

// Throws UsageError unless epsilon > 0, q > 0, d1 >= 0, d2 >= 0.
void validate(const OregonatorParams& p);

// Pointwise reaction terms (no diffusion):
//   f1 = (z1 (1 - z1) - sigma z2 (z1 - q) / (z1 + q)) / epsilon
//   f2 = z1 - z2
// Throws NumericalError if z1 + q == 0.
void oregonator_reaction(const OregonatorParams& p, double z1, double z2,
                         double& f1, double& f2);

// Full drift over fields: reaction terms plus d1*lap1 / d2*lap2. All spans
// must share one length; outputs may alias inputs only if distinct from them.
void oregonator_drift(const OregonatorParams& p, std::span<const double> z1,
                      std::span<const double> z2, std::span<const double> lap1,
                      std::span<const double> lap2, std::span<double> f1,
                      std::span<double> f2);

// Positive homogeneous steady state: the positive root of
//   z^2 - (1 - sigma - q) z - q (1 + sigma) = 0,
// refined so the evaluated reaction drift at (z*, z*) is exactly zero in
// double precision whenever such a representable point exists nearby.
// Returns (z1*, z2*) with z2* = z1*. Throws if no positive root exists.
std::pair<double, double> oregonator_steady_state(const OregonatorParams& p);

} // namespace rdf
