#include "rdfilter/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rdfilter/errors.hpp"

namespace rdf {

namespace {

using nlohmann::json;

// Pulls j[name] with a type check; leaves out untouched when absent so struct
// defaults survive partial configs.
template <typename T>
void get_field(const json& j, const std::string& section, const char* name, T& out) {
    const auto it = j.find(name);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw UsageError("config field " + section + "." + name + " has the wrong type");
    }
}

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw UsageError("config section " + section + " must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok) throw UsageError("unknown config field " + section + "." + key);
    }
}

} // namespace

void RunConfig::validate() const {
    if (side < 1) throw UsageError("lattice.side must be >= 1");
    if (!(spacing > 0.0)) throw UsageError("lattice.spacing must be > 0");
    try {
        rdf::validate(reaction);
    } catch (const UsageError& e) {
        throw UsageError(std::string("reaction: ") + e.what());
    }
    if (!(dt > 0.0)) throw UsageError("dynamics.dt must be > 0");
    if (!(horizon > 0.0)) throw UsageError("dynamics.horizon must be > 0");
    if (!(sigma_x >= 0.0)) throw UsageError("dynamics.sigma_x must be >= 0");
    if (integrator != "euler" && integrator != "rk4")
        throw UsageError("dynamics.integrator must be 'euler' or 'rk4'");
    if (rk4_substeps < 1) throw UsageError("dynamics.rk4_substeps must be >= 1");
    if (!std::isfinite(positivity_floor))
        throw UsageError("dynamics.positivity_floor must be finite");
    if (n_wavelengths < 1) throw UsageError("observation.n_wavelengths must be >= 1");
    if (!(lambda_max > lambda_min))
        throw UsageError("observation.lambda_max must exceed observation.lambda_min");
    if (centers.empty() || centers.size() != widths.size())
        throw UsageError("observation.centers and observation.widths must be non-empty and "
                         "equal length");
    if (centers.size() != 2)
        throw UsageError("observation.centers must list exactly 2 species responses");
    for (double w : widths)
        if (!(w > 0.0)) throw UsageError("observation.widths entries must be > 0");
    if (!(sigma_y2 > 0.0)) throw UsageError("observation.sigma_y2 must be > 0");
    if (obs_stride < 1) throw UsageError("observation.stride must be >= 1");
    if (n_particles < 1) throw UsageError("filter.n_particles must be >= 1");
    if (block_side < 1 || block_side > side)
        throw UsageError("filter.block_side must be in [1, lattice.side]");
    if (side % block_side != 0)
        throw UsageError("filter.block_side must divide lattice.side exactly");
    if (proposal != "optimal" && proposal != "bootstrap" && proposal != "standard")
        throw UsageError("filter.proposal must be 'optimal', 'bootstrap', or 'standard'");
    if (resampling != "multinomial" && resampling != "systematic")
        throw UsageError("filter.resampling must be 'multinomial' or 'systematic'");
    if (init.kind != "steady_state" && init.kind != "bump")
        throw UsageError("init.kind must be 'steady_state' or 'bump'");
    if (init.kind == "bump") {
        if (!(init.bump_sigma > 0.0)) throw UsageError("init.bump_sigma must be > 0");
        if (init.bump_v1 < 0 || init.bump_v1 > side || init.bump_v2 < 0 ||
            init.bump_v2 > side)
            throw UsageError("init.bump_v1/bump_v2 must be 0 (centre) or in [1, lattice.side]");
    }
    if (output.estimate_stride < 0)
        throw UsageError("output.estimate_stride must be >= 0");
    for (double t : output.snapshot_times)
        if (!(t >= 0.0)) throw UsageError("output.snapshot_times entries must be >= 0");
    if (n_steps() < 1)
        throw UsageError("dynamics.horizon must cover at least one dt step");
}

int RunConfig::n_steps() const {
    return static_cast<int>(std::llround(horizon / dt));
}

Lattice RunConfig::make_lattice() const { return Lattice(side, spacing); }

NoiseModel RunConfig::make_noise() const {
    NoiseModel nm;
    nm.sigma_x = sigma_x;
    nm.sigma_y2 = sigma_y2;
    nm.dt = dt;
    return nm;
}

ObservationModel RunConfig::make_observation() const {
    return ObservationModel::gaussian_bands(centers, widths, n_wavelengths, lambda_min,
                                            lambda_max, sigma_y2);
}

Integrator RunConfig::make_integrator() const {
    return integrator == "rk4" ? Integrator::kRk4 : Integrator::kEuler;
}

ProposalKind RunConfig::make_proposal() const {
    return proposal == "optimal" ? ProposalKind::kOptimal : ProposalKind::kBootstrap;
}

ResamplingScheme RunConfig::make_resampling() const {
    return resampling == "systematic" ? ResamplingScheme::kSystematic
                                      : ResamplingScheme::kMultinomial;
}

RunConfig config_from_json(const json& j, bool validated) {
    if (!j.is_object()) throw UsageError("config root must be a JSON object");
    check_keys(j, "(root)",
               {"lattice", "reaction", "dynamics", "observation", "filter", "init", "seeds",
                "output"});
    RunConfig c;

    if (j.contains("lattice")) {
        const auto& s = j.at("lattice");
        check_keys(s, "lattice", {"side", "spacing"});
        get_field(s, "lattice", "side", c.side);
        get_field(s, "lattice", "spacing", c.spacing);
    }
    if (j.contains("reaction")) {
        const auto& s = j.at("reaction");
        check_keys(s, "reaction", {"epsilon", "sigma", "q", "d1", "d2"});
        get_field(s, "reaction", "epsilon", c.reaction.epsilon);
        get_field(s, "reaction", "sigma", c.reaction.sigma);
        get_field(s, "reaction", "q", c.reaction.q);
        get_field(s, "reaction", "d1", c.reaction.d1);
        get_field(s, "reaction", "d2", c.reaction.d2);
    }
    if (j.contains("dynamics")) {
        const auto& s = j.at("dynamics");
        check_keys(s, "dynamics",
                   {"dt", "horizon", "sigma_x", "integrator", "rk4_substeps",
                    "positivity_floor"});
        get_field(s, "dynamics", "dt", c.dt);
        get_field(s, "dynamics", "horizon", c.horizon);
        get_field(s, "dynamics", "sigma_x", c.sigma_x);
        get_field(s, "dynamics", "integrator", c.integrator);
        get_field(s, "dynamics", "rk4_substeps", c.rk4_substeps);
        get_field(s, "dynamics", "positivity_floor", c.positivity_floor);
    }
    if (j.contains("observation")) {
        const auto& s = j.at("observation");
        check_keys(s, "observation",
                   {"n_wavelengths", "lambda_min", "lambda_max", "centers", "widths",
                    "sigma_y2", "stride"});
        get_field(s, "observation", "n_wavelengths", c.n_wavelengths);
        get_field(s, "observation", "lambda_min", c.lambda_min);
        get_field(s, "observation", "lambda_max", c.lambda_max);
        get_field(s, "observation", "centers", c.centers);
        get_field(s, "observation", "widths", c.widths);
        get_field(s, "observation", "sigma_y2", c.sigma_y2);
        get_field(s, "observation", "stride", c.obs_stride);
    }
    if (j.contains("filter")) {
        const auto& s = j.at("filter");
        check_keys(s, "filter", {"n_particles", "block_side", "proposal", "resampling"});
        get_field(s, "filter", "n_particles", c.n_particles);
        get_field(s, "filter", "block_side", c.block_side);
        get_field(s, "filter", "proposal", c.proposal);
        get_field(s, "filter", "resampling", c.resampling);
    }
    if (j.contains("init")) {
        const auto& s = j.at("init");
        check_keys(s, "init",
                   {"kind", "bump_amplitude", "bump_sigma", "bump_v1", "bump_v2"});
        get_field(s, "init", "kind", c.init.kind);
        get_field(s, "init", "bump_amplitude", c.init.bump_amplitude);
        get_field(s, "init", "bump_sigma", c.init.bump_sigma);
        get_field(s, "init", "bump_v1", c.init.bump_v1);
        get_field(s, "init", "bump_v2", c.init.bump_v2);
    }
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        check_keys(s, "seeds", {"simulation", "filter"});
        get_field(s, "seeds", "simulation", c.simulation_seed);
        get_field(s, "seeds", "filter", c.filter_seed);
    }
    if (j.contains("output")) {
        const auto& s = j.at("output");
        check_keys(s, "output", {"directory", "snapshot_times", "estimate_stride"});
        get_field(s, "output", "directory", c.output.directory);
        get_field(s, "output", "snapshot_times", c.output.snapshot_times);
        get_field(s, "output", "estimate_stride", c.output.estimate_stride);
    }

    // Canonicalize the proposal alias so round-trips are stable.
    if (c.proposal == "standard") c.proposal = "bootstrap";
    if (validated) c.validate();
    return c;
}

json config_to_json(const RunConfig& c) {
    return json{
        {"lattice", {{"side", c.side}, {"spacing", c.spacing}}},
        {"reaction",
         {{"epsilon", c.reaction.epsilon},
          {"sigma", c.reaction.sigma},
          {"q", c.reaction.q},
          {"d1", c.reaction.d1},
          {"d2", c.reaction.d2}}},
        {"dynamics",
         {{"dt", c.dt},
          {"horizon", c.horizon},
          {"sigma_x", c.sigma_x},
          {"integrator", c.integrator},
          {"rk4_substeps", c.rk4_substeps},
          {"positivity_floor", c.positivity_floor}}},
        {"observation",
         {{"n_wavelengths", c.n_wavelengths},
          {"lambda_min", c.lambda_min},
          {"lambda_max", c.lambda_max},
          {"centers", c.centers},
          {"widths", c.widths},
          {"sigma_y2", c.sigma_y2},
          {"stride", c.obs_stride}}},
        {"filter",
         {{"n_particles", c.n_particles},
          {"block_side", c.block_side},
          {"proposal", c.proposal},
          {"resampling", c.resampling}}},
        {"init",
         {{"kind", c.init.kind},
          {"bump_amplitude", c.init.bump_amplitude},
          {"bump_sigma", c.init.bump_sigma},
          {"bump_v1", c.init.bump_v1},
          {"bump_v2", c.init.bump_v2}}},
        {"seeds", {{"simulation", c.simulation_seed}, {"filter", c.filter_seed}}},
        {"output",
         {{"directory", c.output.directory},
          {"snapshot_times", c.output.snapshot_times},
          {"estimate_stride", c.output.estimate_stride}}},
    };
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw UsageError(std::string("malformed config: ") + e.what());
    }
    return config_from_json(j);
}

std::string serialize_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void apply_override(json& j, const std::string& key, const std::string& value) {
    if (key.empty()) throw UsageError("override key must not be empty");
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(key);
    while (std::getline(in, part, '.')) {
        if (part.empty()) throw UsageError("override key '" + key + "' has an empty segment");
        parts.push_back(part);
    }
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value; // bare strings like "optimal" arrive unquoted
    }
    json* node = &j;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = parsed;
}

} // namespace rdf
