#pragma once

// Run configuration: a single JSON document whose defaults reproduce the
// reference experiment exactly; every field is overridable from the command
// line via dotted keys.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdfilter/dynamics.hpp"
#include "rdfilter/filter.hpp"
#include "rdfilter/lattice.hpp"
#include "rdfilter/reaction.hpp"

namespace rdf {

struct InitSpec {
    std::string kind = "steady_state"; // "steady_state" | "bump"
    double bump_amplitude = 0.5;
    double bump_sigma = 0.1; // physical half-width of the Gaussian bump
    int bump_v1 = 0;         // 1-based site coordinates; 0 = lattice centre
    int bump_v2 = 0;

    bool operator==(const InitSpec&) const = default;
};

struct OutputSpec {
    std::string directory = "out";
    std::vector<double> snapshot_times = {10.0, 20.0, 30.0, 40.0};
    int estimate_stride = 100; // steps between stored state estimates

    bool operator==(const OutputSpec&) const = default;
};

struct RunConfig {
    // lattice
    int side = 100;
    double spacing = 0.02;
    // reaction
    OregonatorParams reaction;
    // dynamics
    double dt = 0.01;
    double horizon = 40.0;
    double sigma_x = 1e-2;
    std::string integrator = "euler"; // "euler" | "rk4"
    int rk4_substeps = 4;
    double positivity_floor = 1e-12;
    // observation
    int n_wavelengths = 10;
    double lambda_min = 0.0;
    double lambda_max = 50.0;
    std::vector<double> centers = {10.0, 40.0};
    std::vector<double> widths = {30.0, 30.0};
    double sigma_y2 = 1e-5;
    int obs_stride = 1;
    // filter
    int n_particles = 128;
    int block_side = 5;
    std::string proposal = "optimal";       // "optimal" | "bootstrap" ("standard")
    std::string resampling = "multinomial"; // "multinomial" | "systematic"
    // initialization and seeds
    InitSpec init;
    std::uint64_t simulation_seed = 1;
    std::uint64_t filter_seed = 2;
    // output
    OutputSpec output;

    void validate() const; // throws UsageError naming the offending field
    int n_steps() const;   // round(horizon / dt)

    Lattice make_lattice() const;
    NoiseModel make_noise() const;
    ObservationModel make_observation() const;
    Integrator make_integrator() const;
    ProposalKind make_proposal() const;
    ResamplingScheme make_resampling() const;

    bool operator==(const RunConfig&) const = default;
};

// Strict converters: unknown keys and type mismatches are usage errors that
// name the offending field. Cross-field validation can be deferred so that
// configs may pass through transient states while overrides are applied.
RunConfig config_from_json(const nlohmann::json& j, bool validated = true);
nlohmann::json config_to_json(const RunConfig& c);

RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& c);
RunConfig load_config(const std::string& path);

// Applies "section.key=value" to the JSON form; value is parsed as a JSON
// literal when possible and as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& key, const std::string& value);

} // namespace rdf
