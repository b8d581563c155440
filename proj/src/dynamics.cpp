#include "rdfilter/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rdfilter/errors.hpp"

namespace rdf {

void NoiseModel::validate() const {
    if (!(sigma_x >= 0.0)) throw UsageError("noise sigma_x must be >= 0");
    if (!(sigma_y2 > 0.0)) throw UsageError("noise sigma_y2 must be > 0");
    if (!(dt > 0.0)) throw UsageError("noise dt must be > 0");
}

StateField StateField::constant(int n_sites, int n_species, double value) {
    if (n_sites < 1 || n_species < 1)
        throw UsageError("state field dimensions must be positive");
    StateField f;
    f.n_sites = n_sites;
    f.n_species = n_species;
    f.values.assign(static_cast<std::size_t>(n_sites) * n_species, value);
    return f;
}

void StateField::validate() const {
    if (n_sites < 1 || n_species < 1)
        throw UsageError("state field dimensions must be positive");
    if (values.size() != static_cast<std::size_t>(n_sites) * n_species)
        throw UsageError("state field holds " + std::to_string(values.size()) +
                         " values, expected " + std::to_string(n_sites * n_species));
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw NumericalError("state field has non-finite component at index " +
                                 std::to_string(i));
}

ObservationModel ObservationModel::gaussian_bands(std::span<const double> centers,
                                                  std::span<const double> widths,
                                                  int n_wavelengths, double lambda_min,
                                                  double lambda_max, double sigma_y2) {
    if (centers.size() != widths.size() || centers.empty())
        throw UsageError("observation bands: centers and widths must match and be non-empty");
    if (n_wavelengths < 1) throw UsageError("observation bands: need at least one wavelength");
    if (!(lambda_max > lambda_min)) throw UsageError("observation bands: empty wavelength range");
    for (double w : widths)
        if (!(w > 0.0)) throw UsageError("observation bands: widths must be > 0");

    ObservationModel om;
    om.n_species = static_cast<int>(centers.size());
    om.sigma_y2 = sigma_y2;
    om.wavelengths.resize(n_wavelengths);
    om.response.resize(static_cast<std::size_t>(n_wavelengths) * om.n_species);
    const double dl = (lambda_max - lambda_min) / n_wavelengths;
    for (int j = 0; j < n_wavelengths; ++j) {
        const double l = lambda_min + j * dl;
        om.wavelengths[j] = l;
        for (int s = 0; s < om.n_species; ++s) {
            const double d = l - centers[s];
            om.response[static_cast<std::size_t>(j) * om.n_species + s] =
                std::exp(-d * d / widths[s]);
        }
    }
    om.validate();
    return om;
}

void ObservationModel::validate() const {
    if (n_species < 1) throw UsageError("observation model: n_species must be >= 1");
    if (wavelengths.empty()) throw UsageError("observation model: need at least one wavelength");
    if (response.size() != wavelengths.size() * static_cast<std::size_t>(n_species))
        throw UsageError("observation model: response matrix is " +
                         std::to_string(response.size()) + " entries, expected " +
                         std::to_string(wavelengths.size() * n_species));
    for (double r : response)
        if (!std::isfinite(r)) throw UsageError("observation model: non-finite response entry");
    if (!(sigma_y2 > 0.0)) throw UsageError("observation model: sigma_y2 must be > 0");
}

std::vector<double> ObservationField::wavelength_image(int j) const {
    if (j < 0 || j >= n_wavelengths)
        throw UsageError("wavelength index " + std::to_string(j) + " outside [0, " +
                         std::to_string(n_wavelengths) + ")");
    std::vector<double> img(n_sites);
    for (int v = 0; v < n_sites; ++v)
        img[v] = values[static_cast<std::size_t>(v) * n_wavelengths + j];
    return img;
}

OregonatorModel::OregonatorModel(Lattice lattice, OregonatorParams params, NoiseModel noise,
                                 Integrator integrator, int rk4_substeps,
                                 double positivity_floor)
    : lattice_(std::move(lattice)),
      params_(params),
      noise_(noise),
      integrator_(integrator),
      rk4_substeps_(rk4_substeps),
      floor_(positivity_floor) {
    rdf::validate(params_);
    noise_.validate();
    if (integrator_ == Integrator::kRk4 && rk4_substeps_ < 1)
        throw UsageError("rk4_substeps must be >= 1");
}

namespace {

// Per-thread scratch keeps flow() allocation-free in hot loops.
struct DriftScratch {
    std::vector<double> lap1, lap2;
};

DriftScratch& drift_scratch(int n) {
    thread_local DriftScratch s;
    s.lap1.resize(n);
    s.lap2.resize(n);
    return s;
}

} // namespace

void OregonatorModel::drift(std::span<const double> x, std::span<double> out) const {
    const int n = lattice_.n_sites();
    if (static_cast<int>(x.size()) != 2 * n || static_cast<int>(out.size()) != 2 * n)
        throw UsageError("drift: state length does not match lattice");
    auto& ws = drift_scratch(n);
    const auto z1 = x.subspan(0, n);
    const auto z2 = x.subspan(n, n);
    laplacian(lattice_, z1, ws.lap1);
    laplacian(lattice_, z2, ws.lap2);
    oregonator_drift(params_, z1, z2, ws.lap1, ws.lap2, out.subspan(0, n), out.subspan(n, n));
}

void OregonatorModel::flow(std::span<const double> x, std::span<double> out) const {
    const int m = state_size();
    if (static_cast<int>(x.size()) != m || static_cast<int>(out.size()) != m)
        throw UsageError("flow: state length does not match lattice");

    if (integrator_ == Integrator::kEuler) {
        drift(x, out);
        for (int i = 0; i < m; ++i) out[i] = x[i] + noise_.dt * out[i];
        return;
    }

    // Classic fixed-step RK4 over rk4_substeps_ substeps of dt.
    thread_local std::vector<double> k1, k2, k3, k4, tmp, cur;
    k1.resize(m), k2.resize(m), k3.resize(m), k4.resize(m), tmp.resize(m), cur.resize(m);
    std::copy(x.begin(), x.end(), cur.begin());
    const double h = noise_.dt / rk4_substeps_;
    for (int s = 0; s < rk4_substeps_; ++s) {
        drift(cur, k1);
        for (int i = 0; i < m; ++i) tmp[i] = cur[i] + 0.5 * h * k1[i];
        drift(tmp, k2);
        for (int i = 0; i < m; ++i) tmp[i] = cur[i] + 0.5 * h * k2[i];
        drift(tmp, k3);
        for (int i = 0; i < m; ++i) tmp[i] = cur[i] + h * k3[i];
        drift(tmp, k4);
        for (int i = 0; i < m; ++i)
            cur[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    std::copy(cur.begin(), cur.end(), out.begin());
}

void OregonatorModel::noise_gain(std::span<const double> x, std::span<double> g) const {
    const int m = state_size();
    if (static_cast<int>(x.size()) != m || static_cast<int>(g.size()) != m)
        throw UsageError("noise_gain: state length does not match lattice");
    const double s = noise_.sigma_x;
    for (int i = 0; i < m; ++i) g[i] = s * x[i];
}

StateField drift(const StateField& state, const Lattice& lat, const OregonatorParams& params) {
    state.validate();
    if (state.n_species != 2 || state.n_sites != lat.n_sites())
        throw UsageError("drift: state does not match a two-species lattice field");
    NoiseModel nm; // defaults suffice; drift does not use noise
    OregonatorModel model(lat, params, nm);
    StateField out = state;
    model.drift(state.values, out.values);
    return out;
}

void step_state(const TransitionModel& model, std::span<const double> x, std::span<double> out,
                std::uint64_t seed, std::uint64_t step_index, std::uint64_t member) {
    const int m = model.state_size();
    if (static_cast<int>(x.size()) != m || static_cast<int>(out.size()) != m)
        throw UsageError("step_state: state length does not match model");

    model.flow(x, out);

    thread_local std::vector<double> gain;
    gain.resize(m);
    model.noise_gain(x, gain); // zero-order hold: gain at the pre-step state

    const RngStream stream(seed, RngDomain::kStateNoise, step_index, member);
    const double sq = std::sqrt(model.dt());
    const int n = model.n_sites();
    const int ns = model.n_species();
    if (ns == 2) {
        for (int v = 0; v < n; ++v) {
            double z0, z1;
            stream.normal_pair(v, z0, z1);
            out[v] += gain[v] * sq * z0;
            out[n + v] += gain[n + v] * sq * z1;
        }
    } else {
        for (int v = 0; v < n; ++v)
            for (int s = 0; s < ns; ++s) {
                const std::uint64_t c = static_cast<std::uint64_t>(v) * ns + s;
                out[s * n + v] += gain[s * n + v] * sq * stream.normal(c);
            }
    }

    const double floor = model.positivity_floor();
    for (int i = 0; i < m; ++i) {
        if (!std::isfinite(out[i]))
            throw NumericalError("non-finite state at site " + std::to_string(i % n) +
                                 ", species " + std::to_string(i / n + 1) + " after step " +
                                 std::to_string(step_index));
        if (out[i] < floor) out[i] = floor;
    }
}

StateField step(const StateField& state, const OregonatorModel& model, std::uint64_t seed,
                std::uint64_t step_index) {
    state.validate();
    StateField out = state;
    step_state(model, state.values, out.values, seed, step_index, 0);
    out.time = state.time + model.dt();
    return out;
}

void observe_mean(const ObservationModel& om, int n_sites, std::span<const double> x,
                  std::span<double> y) {
    const int ns = om.n_species;
    const int nl = om.n_wavelengths();
    if (static_cast<int>(x.size()) != ns * n_sites)
        throw UsageError("observe_mean: state length does not match model");
    if (static_cast<int>(y.size()) != nl * n_sites)
        throw UsageError("observe_mean: output length does not match model");
    for (int v = 0; v < n_sites; ++v) {
        double* yv = &y[static_cast<std::size_t>(v) * nl];
        for (int j = 0; j < nl; ++j) {
            double acc = 0.0;
            for (int s = 0; s < ns; ++s)
                acc += om.response[static_cast<std::size_t>(j) * ns + s] *
                       x[static_cast<std::size_t>(s) * n_sites + v];
            yv[j] = acc;
        }
    }
}

ObservationField observe(const ObservationModel& om, const StateField& state,
                         std::uint64_t seed, std::uint64_t step_index) {
    om.validate();
    state.validate();
    if (state.n_species != om.n_species)
        throw UsageError("observe: state species count does not match observation model");

    ObservationField obs;
    obs.n_sites = state.n_sites;
    obs.n_wavelengths = om.n_wavelengths();
    obs.time = state.time;
    obs.values.resize(static_cast<std::size_t>(obs.n_sites) * obs.n_wavelengths);
    observe_mean(om, state.n_sites, state.values, obs.values);

    const RngStream stream(seed, RngDomain::kObsNoise, step_index, 0);
    const double sy = std::sqrt(om.sigma_y2);
    for (std::size_t c = 0; c < obs.values.size(); ++c) obs.values[c] += sy * stream.normal(c);
    return obs;
}

void simulate(const OregonatorModel& model, const ObservationModel& om,
              const StateField& initial, int n_steps, int obs_stride, std::uint64_t seed,
              TrajectorySink& sink) {
    if (n_steps < 1) throw UsageError("simulate: n_steps must be >= 1");
    if (obs_stride < 1) throw UsageError("simulate: obs_stride must be >= 1");
    initial.validate();
    if (initial.n_sites != model.n_sites() || initial.n_species != model.n_species())
        throw UsageError("simulate: initial state does not match model dimensions");

    StateField x = initial;
    sink.on_initial(x);
    StateField next = x;
    for (int k = 1; k <= n_steps; ++k) {
        step_state(model, x.values, next.values, seed, static_cast<std::uint64_t>(k), 0);
        next.time = initial.time + k * model.dt();
        x.values.swap(next.values);
        x.time = next.time;
        if (k % obs_stride == 0) sink.on_sample(k, x, observe(om, x, seed, k));
    }
}

} // namespace rdf
