#pragma once

// Block particle filter: disjoint lattice blocks are weighted and resampled
// independently, localizing the update so the ensemble size needed does not
// grow with the lattice. Bootstrap and locally optimal proposals.

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "rdfilter/dynamics.hpp"
#include "rdfilter/lattice.hpp"
#include "rdfilter/rng.hpp"

namespace rdf {

enum class ProposalKind { kBootstrap, kOptimal };
enum class ResamplingScheme { kMultinomial, kSystematic };

// Upper bound on species count for the per-site conditioning work arrays;
// generous for reaction networks observed spectroscopically.
inline constexpr int kMaxSpecies = 8;

struct FilterSettings {
    int n_particles = 128;
    ProposalKind proposal = ProposalKind::kOptimal;
    ResamplingScheme resampling = ResamplingScheme::kMultinomial;
    std::uint64_t seed = 0;
    int n_threads = 1;

    void validate() const;
};

// Particle states (particle-major storage) plus one normalized weight vector
// per block. Weights refer to block-restricted marginals: weights(b)[n] is
// the weight of particle n's section over block b.
class ParticleEnsemble {
public:
    ParticleEnsemble(int n_particles, int n_sites, int n_species, BlockPartition partition);

    int n_particles() const noexcept { return n_particles_; }
    int n_sites() const noexcept { return n_sites_; }
    int n_species() const noexcept { return n_species_; }
    int state_size() const noexcept { return n_sites_ * n_species_; }
    int n_blocks() const noexcept { return partition_.n_blocks(); }
    const BlockPartition& partition() const noexcept { return partition_; }

    std::span<double> particle(int n) {
        return std::span<double>(states_).subspan(static_cast<std::size_t>(n) * state_size(),
                                                  state_size());
    }
    std::span<const double> particle(int n) const {
        return std::span<const double>(states_).subspan(
            static_cast<std::size_t>(n) * state_size(), state_size());
    }

    std::span<double> weights(int b) {
        return std::span<double>(weights_).subspan(static_cast<std::size_t>(b) * n_particles_,
                                                   n_particles_);
    }
    std::span<const double> weights(int b) const {
        return std::span<const double>(weights_).subspan(
            static_cast<std::size_t>(b) * n_particles_, n_particles_);
    }

    // All particles set to x0 (Dirac initial distribution), uniform weights.
    void init_dirac(std::span<const double> x0);
    void set_uniform_weights();

    // Flat state-vector indices covered by block b: every species at every
    // site of the block, ascending.
    const std::vector<std::int32_t>& block_components(int b) const {
        return components_[b];
    }
    // Block id owning each lattice site.
    const std::vector<std::int32_t>& block_of_site() const noexcept { return site_block_; }

    // Throws NumericalError if any block's weights fail to be a simplex
    // vector within the given tolerance.
    void check_weights(double tol = 1e-12) const;

private:
    int n_particles_;
    int n_sites_;
    int n_species_;
    BlockPartition partition_;
    std::vector<double> states_;
    std::vector<double> weights_;
    std::vector<std::vector<std::int32_t>> components_;
    std::vector<std::int32_t> site_block_;
};

// Gaussian conditioning of one site's state on its observed spectrum, with
// the per-species prior N(flow, dt * gain^2) from the zero-order-hold step.
// Formulated so zero gains are handled exactly: with G = dt diag(gain)^2 and
// C = Phi^T Phi / sigma_y2,
//   Sigma = G (I + C G)^{-1},   mean = flow + Sigma Phi^T (y - Phi flow) / sigma_y2,
// and the predictive density of y is N(Phi flow, Phi G Phi^T + sigma_y2 I),
// evaluated through the same (I + C G) factor so no output-sized matrix is
// ever formed.
class SiteConditioner {
public:
    SiteConditioner(const ObservationModel& om, double dt);

    int n_species() const noexcept { return ns_; }
    int n_wavelengths() const noexcept { return nl_; }

    // gain/flow: one entry per species at the site; y: the site's spectrum.
    // Writes posterior mean (ns) and covariance (ns x ns, row-major); returns
    // the predictive log-density of y.
    double condition(std::span<const double> gain, std::span<const double> flow,
                     std::span<const double> y, std::span<double> mean,
                     std::span<double> cov) const;

    // log N(y; Phi z, sigma_y2 I): the local bootstrap likelihood.
    double local_loglik(std::span<const double> z, std::span<const double> y) const;

    // Draws x ~ N(mean, cov) using stream normals counter_base .. counter_base+ns-1.
    void draw(std::span<const double> mean, std::span<const double> cov,
              const RngStream& stream, std::uint64_t counter_base, std::span<double> x) const;

    const std::vector<double>& response() const noexcept { return phi_; }

private:
    int ns_;
    int nl_;
    double sigma_y2_;
    double dt_;
    double gauss_const_; // -0.5 * nl * (log(2 pi) + log(sigma_y2))
    double inv_sy2_;
    std::vector<double> phi_; // nl x ns row-major
    std::vector<double> c_;   // ns x ns: Phi^T Phi / sigma_y2
};

// Ancestor indices drawn from one block's normalized weights. Multinomial
// uses one uniform per slot; systematic uses a single stratified offset.
void draw_ancestors(std::span<const double> weights, ResamplingScheme scheme,
                    const RngStream& stream, std::span<int> ancestors);

struct FilterStepRecord {
    int step = 0;
    double time = 0.0;
    std::vector<double> block_loglik; // log(mean unnormalized weight), per block
    std::vector<double> block_ess;
    std::vector<double> block_rmse; // observation-space residual norm, per block
    double rmse_total = 0.0;
    double step_loglik = 0.0;  // sum of block_loglik
    int degenerate_blocks = 0; // blocks with ESS below 1 + 1e-9
};

class BlockParticleFilter {
public:
    BlockParticleFilter(const TransitionModel& model, const ObservationModel& om,
                        BlockPartition partition, FilterSettings settings);

    void init_dirac(std::span<const double> x0);

    // One filter iteration against the observation for the next step
    // (site-major spectra, length n_sites * n_wavelengths): resample the
    // previous ensemble block-wise, propose, weight, and record diagnostics.
    FilterStepRecord filter_step(std::span<const double> y);

    // The three phases of filter_step, exposed so tests can drive them
    // individually. They must be called in resample -> propose -> reweight
    // order; filter_step enforces this.
    void resample();
    void propose(std::span<const double> y);
    FilterStepRecord reweight(std::span<const double> y);

    const ParticleEnsemble& ensemble() const noexcept { return ens_; }
    ParticleEnsemble& ensemble() noexcept { return ens_; } // test setup access

    // Block-wise weighted posterior mean, assembled into a full state vector.
    std::vector<double> estimate() const;

    int completed_steps() const noexcept { return k_; }
    const FilterSettings& settings() const noexcept { return settings_; }
    const TransitionModel& model() const noexcept { return model_; }
    const ObservationModel& observation_model() const noexcept { return om_; }

private:
    enum class Phase { kReady, kResampled, kProposed };

    void propose_bootstrap_(std::span<const double> y);
    void propose_optimal_(std::span<const double> y);
    void observation_rmse_(std::span<const double> y, FilterStepRecord& rec) const;

    const TransitionModel& model_;
    const ObservationModel& om_;
    FilterSettings settings_;
    ParticleEnsemble ens_;
    SiteConditioner cond_;
    int k_ = 0;
    Phase phase_ = Phase::kReady;
    std::vector<double> scratch_;   // resampling buffer, one full ensemble
    std::vector<double> logw_;      // pending log-weights, n_blocks x n_particles
    std::vector<int> ancestors_;    // n_blocks x n_particles
};

// Supplies observations to run_filter one step at a time so long runs never
// need the whole sequence in memory.
class ObservationSource {
public:
    virtual ~ObservationSource() = default;
    virtual int n_steps() const = 0;
    // Fills the site-major spectra for filter step k+1 (k in [0, n_steps));
    // returns the observation time.
    virtual double load(int k, std::span<double> y) = 0;
};

// Adapter over an in-memory sequence of observation fields.
class MemoryObservationSource : public ObservationSource {
public:
    explicit MemoryObservationSource(std::vector<ObservationField> seq)
        : seq_(std::move(seq)) {}
    int n_steps() const override { return static_cast<int>(seq_.size()); }
    double load(int k, std::span<double> y) override;

private:
    std::vector<ObservationField> seq_;
};

struct FilterOutput {
    int n_steps = 0;
    int n_blocks = 0;
    std::vector<double> times;        // per step
    std::vector<double> block_loglik; // n_steps x n_blocks, row-major
    std::vector<double> block_ess;
    std::vector<double> block_rmse;
    std::vector<double> rmse_total;   // per step
    std::vector<double> log_evidence; // cumulative over steps
    std::vector<std::pair<int, std::vector<double>>> estimates; // (step, state)
    std::vector<std::vector<double>> weights; // per step (optional), n_blocks x n_particles
    int degenerate_warnings = 0;
    int first_degenerate_step = -1;

    double total_log_evidence() const noexcept {
        return log_evidence.empty() ? 0.0 : log_evidence.back();
    }
};

struct RunFilterOptions {
    int estimate_stride = 0;     // 0: record only the final estimate
    bool record_weights = false; // copy per-block weights every step
    // Invoked after every completed step (diagnostic streaming).
    std::function<void(const FilterStepRecord&)> on_step;
};

// Iterates filter_step over the whole observation sequence. An empty source
// yields an empty output. Numerical failures propagate to the caller after
// the callback has seen every completed step, so partial results survive.
FilterOutput run_filter(BlockParticleFilter& filter, ObservationSource& source,
                        const RunFilterOptions& options = {});

} // namespace rdf
