#pragma once

// Time discretization of the stochastic reaction-diffusion dynamics, the
// spectral observation operator, and synthetic trajectory generation.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rdfilter/lattice.hpp"
#include "rdfilter/reaction.hpp"
#include "rdfilter/rng.hpp"

namespace rdf {

// Scales of the driving noise and the step size shared by simulation and
// filtering: state noise gain g(X) = sigma_x * diag(X), measurement noise
// variance sigma_y2, zero-order-hold step dt.
struct NoiseModel {
    double sigma_x = 1e-2;
    double sigma_y2 = 1e-5;
    double dt = 0.01;

    void validate() const;
};

// Concentration fields for all species at one time point, species-major:
// values[s * n_sites + v] is species s (0-based) at flat site v.
struct StateField {
    int n_sites = 0;
    int n_species = 0;
    double time = 0.0;
    std::vector<double> values;

    static StateField constant(int n_sites, int n_species, double value);

    std::span<double> species(int s) {
        return std::span<double>(values).subspan(static_cast<std::size_t>(s) * n_sites,
                                                 n_sites);
    }
    std::span<const double> species(int s) const {
        return std::span<const double>(values).subspan(static_cast<std::size_t>(s) * n_sites,
                                                       n_sites);
    }

    void validate() const; // dimension and finiteness checks
};

// Linear spectral responses sampled on a wavelength grid. response is
// row-major N_Lambda x N_S: response[j * n_species + s] = phi_s(lambda_j).
struct ObservationModel {
    std::vector<double> wavelengths;
    std::vector<double> response;
    int n_species = 0;
    double sigma_y2 = 1e-5;

    int n_wavelengths() const noexcept { return static_cast<int>(wavelengths.size()); }

    // Gaussian absorption bands phi_s(l) = exp(-(l - centers[s])^2 / widths[s])
    // on the equally spaced grid lambda_j = lambda_min + j * (lambda_max -
    // lambda_min) / n_wavelengths, j = 0 .. n_wavelengths-1.
    static ObservationModel gaussian_bands(std::span<const double> centers,
                                           std::span<const double> widths, int n_wavelengths,
                                           double lambda_min, double lambda_max,
                                           double sigma_y2);

    void validate() const;
};

// Noisy spectra at every site for one time point. Stored site-major so each
// site's spectrum is contiguous: values[v * n_wavelengths + j]. A
// per-wavelength view (the image at one wavelength) is materialized on demand.
struct ObservationField {
    int n_sites = 0;
    int n_wavelengths = 0;
    double time = 0.0;
    std::vector<double> values;

    std::vector<double> wavelength_image(int j) const;
};

enum class Integrator { kEuler, kRk4 };

// Markov transition over one step dt: a deterministic flow F plus a
// componentwise noise gain g, X_k = F(X_{k-1}) + g(X_{k-1}) * dB_k with
// dB_k ~ N(0, dt I). Implementations must be safe for concurrent flow /
// noise_gain calls (the filter evaluates particles from a thread pool).
class TransitionModel {
public:
    virtual ~TransitionModel() = default;

    virtual int n_sites() const noexcept = 0;
    virtual int n_species() const noexcept = 0;
    virtual double dt() const noexcept = 0;

    // Components are clamped to this lower bound after each step; return
    // -infinity for unconstrained state spaces.
    virtual double positivity_floor() const noexcept = 0;

    virtual void flow(std::span<const double> x, std::span<double> out) const = 0;
    virtual void noise_gain(std::span<const double> x, std::span<double> g) const = 0;

    int state_size() const noexcept { return n_sites() * n_species(); }
};

// Reaction-diffusion transition for the scaled Oregonator on a square lattice.
class OregonatorModel : public TransitionModel {
public:
    OregonatorModel(Lattice lattice, OregonatorParams params, NoiseModel noise,
                    Integrator integrator = Integrator::kEuler, int rk4_substeps = 4,
                    double positivity_floor = 1e-12);

    int n_sites() const noexcept override { return lattice_.n_sites(); }
    int n_species() const noexcept override { return 2; }
    double dt() const noexcept override { return noise_.dt; }
    double positivity_floor() const noexcept override { return floor_; }

    const Lattice& lattice() const noexcept { return lattice_; }
    const OregonatorParams& params() const noexcept { return params_; }
    const NoiseModel& noise() const noexcept { return noise_; }

    // Instantaneous drift: reaction terms plus diffusion via the lattice
    // Laplacian, evaluated on a full species-major state vector.
    void drift(std::span<const double> x, std::span<double> out) const;

    void flow(std::span<const double> x, std::span<double> out) const override;
    void noise_gain(std::span<const double> x, std::span<double> g) const override;

private:
    Lattice lattice_;
    OregonatorParams params_;
    NoiseModel noise_;
    Integrator integrator_;
    int rk4_substeps_;
    double floor_;
};

// Drift of a StateField under the Oregonator dynamics (convenience wrapper).
StateField drift(const StateField& state, const Lattice& lat, const OregonatorParams& params);

// One stochastic step. Noise draws are keyed by (seed, step_index, member)
// and addressed per (site, species), so results do not depend on evaluation
// order; member distinguishes particles (0 for plain simulation). Throws
// NumericalError naming the first non-finite component.
void step_state(const TransitionModel& model, std::span<const double> x, std::span<double> out,
                std::uint64_t seed, std::uint64_t step_index, std::uint64_t member);

// StateField wrapper around step_state, advancing time by dt.
StateField step(const StateField& state, const OregonatorModel& model, std::uint64_t seed,
                std::uint64_t step_index);

// Noiseless expectation of the spectra: y[v*NL+j] = sum_s response[j,s] * x[s*n+v].
void observe_mean(const ObservationModel& om, int n_sites, std::span<const double> x,
                  std::span<double> y);

// Adds i.i.d. N(0, sigma_y2) measurement noise, keyed by (seed, step_index).
ObservationField observe(const ObservationModel& om, const StateField& state,
                         std::uint64_t seed, std::uint64_t step_index);

// Receives simulation output as it is produced (states at observation times).
class TrajectorySink {
public:
    virtual ~TrajectorySink() = default;
    virtual void on_initial(const StateField& state) { (void)state; }
    virtual void on_sample(int step, const StateField& state, const ObservationField& obs) = 0;
};

// Iterates step and observe from a deterministic initial condition. States
// and observations are emitted at steps k = obs_stride, 2*obs_stride, ...;
// the initial state is emitted once up front.
void simulate(const OregonatorModel& model, const ObservationModel& om,
              const StateField& initial, int n_steps, int obs_stride, std::uint64_t seed,
              TrajectorySink& sink);

// In-memory sink for tests and small runs.
class MemoryTrajectory : public TrajectorySink {
public:
    void on_initial(const StateField& state) override { initial = state; }
    void on_sample(int step, const StateField& state, const ObservationField& obs) override {
        steps.push_back(step);
        states.push_back(state);
        observations.push_back(obs);
    }

    StateField initial;
    std::vector<int> steps;
    std::vector<StateField> states;
    std::vector<ObservationField> observations;
};

} // namespace rdf
