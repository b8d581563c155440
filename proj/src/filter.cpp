#include "rdfilter/filter.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "rdfilter/errors.hpp"

namespace rdf {

namespace {

constexpr double kDegenerateEss = 1.0 + 1e-9;

// Runs fn(begin, end) over [0, count) split across n_threads. A single
// thread runs inline so the common case has no scheduling overhead; results
// are identical either way because all randomness is counter-based.
void parallel_ranges(int n_threads, int count, const std::function<void(int, int)>& fn) {
    if (n_threads <= 1 || count <= 1) {
        fn(0, count);
        return;
    }
    const int workers = std::min(n_threads, count);
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto guarded = [&](int begin, int end) {
        try {
            fn(begin, end);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };
    const int chunk = (count + workers - 1) / workers;
    for (int w = 1; w < workers; ++w) {
        const int begin = w * chunk;
        if (begin >= count) break;
        pool.emplace_back(guarded, begin, std::min(count, begin + chunk));
    }
    guarded(0, std::min(chunk, count));
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

void FilterSettings::validate() const {
    if (n_particles < 1) throw UsageError("filter: n_particles must be >= 1");
    if (n_threads < 1) throw UsageError("filter: n_threads must be >= 1");
}

ParticleEnsemble::ParticleEnsemble(int n_particles, int n_sites, int n_species,
                                   BlockPartition partition)
    : n_particles_(n_particles),
      n_sites_(n_sites),
      n_species_(n_species),
      partition_(std::move(partition)) {
    if (n_particles_ < 1) throw UsageError("ensemble: n_particles must be >= 1");
    if (n_sites_ < 1 || n_species_ < 1) throw UsageError("ensemble: empty state");
    if (partition_.n_blocks() < 1) throw UsageError("ensemble: empty partition");

    // The partition must cover every site exactly once.
    site_block_.assign(n_sites_, -1);
    for (int b = 0; b < partition_.n_blocks(); ++b) {
        for (std::int32_t v : partition_.blocks[b]) {
            if (v < 0 || v >= n_sites_)
                throw UsageError("partition references site " + std::to_string(v) +
                                 " outside [0, " + std::to_string(n_sites_) + ")");
            if (site_block_[v] != -1)
                throw UsageError("partition assigns site " + std::to_string(v) + " twice");
            site_block_[v] = b;
        }
    }
    for (int v = 0; v < n_sites_; ++v)
        if (site_block_[v] == -1)
            throw UsageError("partition misses site " + std::to_string(v));

    components_.resize(partition_.n_blocks());
    for (int b = 0; b < partition_.n_blocks(); ++b) {
        auto& comps = components_[b];
        comps.reserve(partition_.blocks[b].size() * n_species_);
        for (int s = 0; s < n_species_; ++s)
            for (std::int32_t v : partition_.blocks[b])
                comps.push_back(static_cast<std::int32_t>(s) * n_sites_ + v);
    }

    states_.assign(static_cast<std::size_t>(n_particles_) * state_size(), 0.0);
    weights_.assign(static_cast<std::size_t>(partition_.n_blocks()) * n_particles_, 0.0);
    set_uniform_weights();
}

void ParticleEnsemble::init_dirac(std::span<const double> x0) {
    if (static_cast<int>(x0.size()) != state_size())
        throw UsageError("init_dirac: state length " + std::to_string(x0.size()) +
                         " does not match ensemble state size " + std::to_string(state_size()));
    for (int n = 0; n < n_particles_; ++n)
        std::copy(x0.begin(), x0.end(), particle(n).begin());
    set_uniform_weights();
}

void ParticleEnsemble::set_uniform_weights() {
    std::fill(weights_.begin(), weights_.end(), 1.0 / n_particles_);
}

void ParticleEnsemble::check_weights(double tol) const {
    for (int b = 0; b < n_blocks(); ++b) {
        double sum = 0.0;
        for (double w : weights(b)) {
            if (!(w >= 0.0) || !std::isfinite(w))
                throw NumericalError("block " + std::to_string(b) +
                                     " has an invalid particle weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > tol)
            throw NumericalError("block " + std::to_string(b) + " weights sum to " +
                                 std::to_string(sum) + ", outside tolerance");
    }
}

SiteConditioner::SiteConditioner(const ObservationModel& om, double dt) {
    om.validate();
    if (!(dt > 0.0)) throw UsageError("conditioner: dt must be > 0");
    if (om.n_species > kMaxSpecies)
        throw UsageError("conditioner: more than " + std::to_string(kMaxSpecies) +
                         " species are not supported");
    ns_ = om.n_species;
    nl_ = om.n_wavelengths();
    sigma_y2_ = om.sigma_y2;
    dt_ = dt;
    phi_ = om.response;
    gauss_const_ = -0.5 * nl_ * (std::log(6.283185307179586476925286766559) +
                                 std::log(sigma_y2_));
    inv_sy2_ = 1.0 / sigma_y2_;
    c_.assign(static_cast<std::size_t>(ns_) * ns_, 0.0);
    for (int i = 0; i < ns_; ++i)
        for (int j = 0; j < ns_; ++j) {
            double acc = 0.0;
            for (int l = 0; l < nl_; ++l)
                acc += phi_[static_cast<std::size_t>(l) * ns_ + i] *
                       phi_[static_cast<std::size_t>(l) * ns_ + j];
            c_[static_cast<std::size_t>(i) * ns_ + j] = acc * inv_sy2_;
        }
}

double SiteConditioner::condition(std::span<const double> gain, std::span<const double> flow,
                                  std::span<const double> y, std::span<double> mean,
                                  std::span<double> cov) const {
    const int ns = ns_;
    const int nl = nl_;
    if (static_cast<int>(gain.size()) != ns || static_cast<int>(flow.size()) != ns ||
        static_cast<int>(y.size()) != nl || static_cast<int>(mean.size()) != ns ||
        static_cast<int>(cov.size()) != ns * ns)
        throw UsageError("conditioner: argument lengths do not match the model");

    // Residual of the predictive mean and its response-space projection.
    double ssr = 0.0;
    double t[kMaxSpecies];
    for (int s = 0; s < ns; ++s) t[s] = 0.0;
    for (int j = 0; j < nl; ++j) {
        double m = 0.0;
        const double* pj = &phi_[static_cast<std::size_t>(j) * ns];
        for (int s = 0; s < ns; ++s) m += pj[s] * flow[s];
        const double r = y[j] - m;
        ssr += r * r;
        for (int s = 0; s < ns; ++s) t[s] += pj[s] * r;
    }

    // B = I + C G with G = dt gain^2; posterior covariance is G B^{-1}.
    double g[kMaxSpecies];
    for (int s = 0; s < ns; ++s) g[s] = dt_ * gain[s] * gain[s];

    double logdet_b;
    double binv[kMaxSpecies * kMaxSpecies];
    if (ns == 1) {
        const double b00 = 1.0 + c_[0] * g[0];
        if (!(b00 > 0.0)) throw NumericalError("conditioner: non-positive system matrix");
        binv[0] = 1.0 / b00;
        logdet_b = std::log(b00);
    } else if (ns == 2) {
        const double b00 = 1.0 + c_[0] * g[0];
        const double b01 = c_[1] * g[1];
        const double b10 = c_[2] * g[0];
        const double b11 = 1.0 + c_[3] * g[1];
        const double det = b00 * b11 - b01 * b10;
        if (!(det > 0.0)) throw NumericalError("conditioner: non-positive system matrix");
        const double inv_det = 1.0 / det;
        binv[0] = b11 * inv_det;
        binv[1] = -b01 * inv_det;
        binv[2] = -b10 * inv_det;
        binv[3] = b00 * inv_det;
        logdet_b = std::log(det);
    } else {
        // Gauss-Jordan with partial pivoting on [B | I] for general species counts.
        double bmat[kMaxSpecies * kMaxSpecies];
        for (int i = 0; i < ns; ++i)
            for (int j = 0; j < ns; ++j) {
                bmat[i * ns + j] = (i == j ? 1.0 : 0.0) + c_[i * ns + j] * g[j];
                binv[i * ns + j] = i == j ? 1.0 : 0.0;
            }
        logdet_b = 0.0;
        for (int col = 0; col < ns; ++col) {
            int piv = col;
            for (int r = col + 1; r < ns; ++r)
                if (std::abs(bmat[r * ns + col]) > std::abs(bmat[piv * ns + col])) piv = r;
            if (piv != col) {
                for (int j = 0; j < ns; ++j) {
                    std::swap(bmat[col * ns + j], bmat[piv * ns + j]);
                    std::swap(binv[col * ns + j], binv[piv * ns + j]);
                }
                // No sign bookkeeping: B = I + CG has eigenvalues >= 1, so
                // det B > 0 and sum(log |pivot|) is already log det B.
            }
            const double p = bmat[col * ns + col];
            if (!(std::abs(p) > 0.0))
                throw NumericalError("conditioner: singular system matrix");
            logdet_b += std::log(std::abs(p));
            const double inv_p = 1.0 / p;
            for (int j = 0; j < ns; ++j) {
                bmat[col * ns + j] *= inv_p;
                binv[col * ns + j] *= inv_p;
            }
            for (int r = 0; r < ns; ++r) {
                if (r == col) continue;
                const double f = bmat[r * ns + col];
                if (f == 0.0) continue;
                for (int j = 0; j < ns; ++j) {
                    bmat[r * ns + j] -= f * bmat[col * ns + j];
                    binv[r * ns + j] -= f * binv[col * ns + j];
                }
            }
        }
    }

    // cov = G binv, symmetrized against roundoff.
    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < ns; ++j) cov[i * ns + j] = g[i] * binv[i * ns + j];
    for (int i = 0; i < ns; ++i)
        for (int j = i + 1; j < ns; ++j) {
            const double v = 0.5 * (cov[i * ns + j] + cov[j * ns + i]);
            cov[i * ns + j] = v;
            cov[j * ns + i] = v;
        }

    // mean = flow + cov * t / sigma_y2; predictive quad form via the identity
    // r^T S^{-1} r = (ssr - t^T cov t / sigma_y2) / sigma_y2.
    double tct = 0.0;
    for (int i = 0; i < ns; ++i) {
        double acc = 0.0;
        for (int j = 0; j < ns; ++j) acc += cov[i * ns + j] * t[j];
        mean[i] = flow[i] + acc * inv_sy2_;
        tct += t[i] * acc;
    }
    const double quad = (ssr - tct * inv_sy2_) * inv_sy2_;
    const double logpdf = gauss_const_ - 0.5 * logdet_b - 0.5 * quad;
    if (!std::isfinite(logpdf))
        throw NumericalError("conditioner: non-finite predictive density");
    return logpdf;
}

double SiteConditioner::local_loglik(std::span<const double> z,
                                     std::span<const double> y) const {
    const int ns = ns_;
    const int nl = nl_;
    if (static_cast<int>(z.size()) != ns || static_cast<int>(y.size()) != nl)
        throw UsageError("local_loglik: argument lengths do not match the model");
    double ssr = 0.0;
    for (int j = 0; j < nl; ++j) {
        double m = 0.0;
        const double* pj = &phi_[static_cast<std::size_t>(j) * ns];
        for (int s = 0; s < ns; ++s) m += pj[s] * z[s];
        const double r = y[j] - m;
        ssr += r * r;
    }
    return gauss_const_ - 0.5 * (ssr * inv_sy2_);
}

void SiteConditioner::draw(std::span<const double> mean, std::span<const double> cov,
                           const RngStream& stream, std::uint64_t counter_base,
                           std::span<double> x) const {
    const int ns = ns_;
    double z[kMaxSpecies];
    if (ns == 2 && (counter_base & 1) == 0) {
        stream.normal_pair(counter_base >> 1, z[0], z[1]);
    } else {
        for (int s = 0; s < ns; ++s) z[s] = stream.normal(counter_base + s);
    }

    // Lower Cholesky factor with zero-clamped pivots so exactly singular
    // covariances (zero noise gain) degenerate to the mean.
    double l[kMaxSpecies * kMaxSpecies];
    for (int i = 0; i < ns; ++i) {
        for (int j = 0; j <= i; ++j) {
            double acc = cov[i * ns + j];
            for (int k = 0; k < j; ++k) acc -= l[i * ns + k] * l[j * ns + k];
            if (i == j) {
                l[i * ns + i] = acc > 0.0 ? std::sqrt(acc) : 0.0;
            } else {
                l[i * ns + j] = l[j * ns + j] > 0.0 ? acc / l[j * ns + j] : 0.0;
            }
        }
    }
    for (int i = 0; i < ns; ++i) {
        double acc = mean[i];
        for (int j = 0; j <= i; ++j) acc += l[i * ns + j] * z[j];
        x[i] = acc;
    }
}

void draw_ancestors(std::span<const double> weights, ResamplingScheme scheme,
                    const RngStream& stream, std::span<int> ancestors) {
    const int np = static_cast<int>(weights.size());
    if (np < 1 || static_cast<int>(ancestors.size()) != np)
        throw UsageError("draw_ancestors: weight and ancestor lengths must match");

    thread_local std::vector<double> cum;
    cum.resize(np);
    double acc = 0.0;
    for (int n = 0; n < np; ++n) {
        acc += weights[n];
        cum[n] = acc;
    }

    if (scheme == ResamplingScheme::kMultinomial) {
        for (int n = 0; n < np; ++n) {
            const double u = stream.uniform(n);
            const auto it = std::upper_bound(cum.begin(), cum.end(), u);
            ancestors[n] = std::min(static_cast<int>(it - cum.begin()), np - 1);
        }
    } else {
        const double u0 = stream.uniform(0);
        int j = 0;
        for (int n = 0; n < np; ++n) {
            const double p = (n + u0) / np;
            while (j < np - 1 && cum[j] < p) ++j;
            ancestors[n] = j;
        }
    }
}

BlockParticleFilter::BlockParticleFilter(const TransitionModel& model,
                                         const ObservationModel& om, BlockPartition partition,
                                         FilterSettings settings)
    : model_(model),
      om_(om),
      settings_(settings),
      ens_(settings.n_particles, model.n_sites(), model.n_species(), std::move(partition)),
      cond_(om, model.dt()) {
    settings_.validate();
    if (om_.n_species != model_.n_species())
        throw UsageError("filter: observation model species count " +
                         std::to_string(om_.n_species) + " does not match model " +
                         std::to_string(model_.n_species()));
    scratch_.resize(static_cast<std::size_t>(settings_.n_particles) * model_.state_size());
    logw_.resize(static_cast<std::size_t>(ens_.n_blocks()) * settings_.n_particles);
    ancestors_.resize(logw_.size());
}

void BlockParticleFilter::init_dirac(std::span<const double> x0) {
    ens_.init_dirac(x0);
    k_ = 0;
    phase_ = Phase::kReady;
}

void BlockParticleFilter::resample() {
    if (phase_ != Phase::kReady)
        throw UsageError("filter phases must run in resample -> propose -> reweight order");
    const int np = settings_.n_particles;
    const int nb = ens_.n_blocks();
    const std::uint64_t step = static_cast<std::uint64_t>(k_) + 1;

    for (int b = 0; b < nb; ++b) {
        const RngStream stream(settings_.seed, RngDomain::kResample, step,
                               static_cast<std::uint64_t>(b));
        draw_ancestors(ens_.weights(b), settings_.resampling, stream,
                       std::span<int>(ancestors_).subspan(static_cast<std::size_t>(b) * np,
                                                          np));
    }

    // Assemble each offspring particle by concatenating the block-sections of
    // its per-block ancestors.
    const int ss = model_.state_size();
    for (int n = 0; n < np; ++n) {
        double* dst = &scratch_[static_cast<std::size_t>(n) * ss];
        for (int b = 0; b < nb; ++b) {
            const int a = ancestors_[static_cast<std::size_t>(b) * np + n];
            const double* src = ens_.particle(a).data();
            for (std::int32_t idx : ens_.block_components(b)) dst[idx] = src[idx];
        }
    }
    for (int n = 0; n < np; ++n) {
        std::memcpy(ens_.particle(n).data(), &scratch_[static_cast<std::size_t>(n) * ss],
                    sizeof(double) * ss);
    }
    ens_.set_uniform_weights();
    phase_ = Phase::kResampled;
}

void BlockParticleFilter::propose(std::span<const double> y) {
    if (phase_ != Phase::kResampled)
        throw UsageError("filter phases must run in resample -> propose -> reweight order");
    const int nl = om_.n_wavelengths();
    const int n = model_.n_sites();
    if (y.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(nl))
        throw UsageError("filter: observation length " + std::to_string(y.size()) +
                         " does not match " + std::to_string(n * static_cast<long>(nl)) +
                         " expected values");
    std::fill(logw_.begin(), logw_.end(), 0.0);
    if (settings_.proposal == ProposalKind::kBootstrap)
        propose_bootstrap_(y);
    else
        propose_optimal_(y);
    phase_ = Phase::kProposed;
}

void BlockParticleFilter::propose_bootstrap_(std::span<const double> y) {
    const int n = model_.n_sites();
    const int ns = model_.n_species();
    const int nl = om_.n_wavelengths();
    const int np = settings_.n_particles;
    const int ss = model_.state_size();
    const std::uint64_t step = static_cast<std::uint64_t>(k_) + 1;
    const double sq = std::sqrt(model_.dt());
    const double floor = model_.positivity_floor();
    const auto& site_block = ens_.block_of_site();

    parallel_ranges(settings_.n_threads, np, [&](int begin, int end) {
        thread_local std::vector<double> flow, gain;
        flow.resize(ss);
        gain.resize(ss);
        double zloc[kMaxSpecies];
        for (int p = begin; p < end; ++p) {
            auto x = ens_.particle(p);
            model_.flow(x, flow);
            model_.noise_gain(x, gain);
            const RngStream stream(settings_.seed, RngDomain::kStateNoise, step,
                                   static_cast<std::uint64_t>(p));
            if (ns == 2) {
                for (int v = 0; v < n; ++v) {
                    double z0, z1;
                    stream.normal_pair(v, z0, z1);
                    x[v] = flow[v] + gain[v] * sq * z0;
                    x[n + v] = flow[n + v] + gain[n + v] * sq * z1;
                }
            } else {
                for (int v = 0; v < n; ++v)
                    for (int s = 0; s < ns; ++s) {
                        const std::uint64_t c = static_cast<std::uint64_t>(v) * ns + s;
                        x[s * n + v] = flow[s * n + v] + gain[s * n + v] * sq * stream.normal(c);
                    }
            }
            for (int i = 0; i < ss; ++i) {
                if (!std::isfinite(x[i]))
                    throw NumericalError("non-finite particle " + std::to_string(p) +
                                         " at site " + std::to_string(i % n) + " in step " +
                                         std::to_string(step));
                if (x[i] < floor) x[i] = floor;
            }
            // Local observation likelihoods, accumulated per block.
            double* lw = &logw_[0];
            for (int v = 0; v < n; ++v) {
                for (int s = 0; s < ns; ++s) zloc[s] = x[static_cast<std::size_t>(s) * n + v];
                const double l = cond_.local_loglik(
                    std::span<const double>(zloc, ns),
                    y.subspan(static_cast<std::size_t>(v) * nl, nl));
                lw[static_cast<std::size_t>(site_block[v]) * np + p] += l;
            }
        }
    });
}

void BlockParticleFilter::propose_optimal_(std::span<const double> y) {
    const int n = model_.n_sites();
    const int ns = model_.n_species();
    const int nl = om_.n_wavelengths();
    const int np = settings_.n_particles;
    const int ss = model_.state_size();
    const std::uint64_t step = static_cast<std::uint64_t>(k_) + 1;
    const double floor = model_.positivity_floor();
    const auto& site_block = ens_.block_of_site();

    parallel_ranges(settings_.n_threads, np, [&](int begin, int end) {
        thread_local std::vector<double> flow, gain;
        flow.resize(ss);
        gain.resize(ss);
        double gloc[kMaxSpecies], floc[kMaxSpecies], mean[kMaxSpecies], xloc[kMaxSpecies];
        double cov[kMaxSpecies * kMaxSpecies];
        for (int p = begin; p < end; ++p) {
            auto x = ens_.particle(p);
            model_.flow(x, flow);
            model_.noise_gain(x, gain);
            const RngStream stream(settings_.seed, RngDomain::kStateNoise, step,
                                   static_cast<std::uint64_t>(p));
            double* lw = &logw_[0];
            for (int v = 0; v < n; ++v) {
                for (int s = 0; s < ns; ++s) {
                    gloc[s] = gain[static_cast<std::size_t>(s) * n + v];
                    floc[s] = flow[static_cast<std::size_t>(s) * n + v];
                }
                const double lp = cond_.condition(
                    std::span<const double>(gloc, ns), std::span<const double>(floc, ns),
                    y.subspan(static_cast<std::size_t>(v) * nl, nl),
                    std::span<double>(mean, ns), std::span<double>(cov, ns * ns));
                cond_.draw(std::span<const double>(mean, ns),
                           std::span<const double>(cov, ns * ns), stream,
                           static_cast<std::uint64_t>(v) * ns, std::span<double>(xloc, ns));
                for (int s = 0; s < ns; ++s) x[static_cast<std::size_t>(s) * n + v] = xloc[s];
                lw[static_cast<std::size_t>(site_block[v]) * np + p] += lp;
            }
            for (int i = 0; i < ss; ++i) {
                if (!std::isfinite(x[i]))
                    throw NumericalError("non-finite particle " + std::to_string(p) +
                                         " at site " + std::to_string(i % n) + " in step " +
                                         std::to_string(step));
                if (x[i] < floor) x[i] = floor;
            }
        }
    });
}

FilterStepRecord BlockParticleFilter::reweight(std::span<const double> y) {
    if (phase_ != Phase::kProposed)
        throw UsageError("filter phases must run in resample -> propose -> reweight order");
    const int np = settings_.n_particles;
    const int nb = ens_.n_blocks();

    FilterStepRecord rec;
    rec.step = k_ + 1;
    rec.time = (k_ + 1) * model_.dt();
    rec.block_loglik.resize(nb);
    rec.block_ess.resize(nb);
    rec.block_rmse.resize(nb);

    const double log_np = std::log(static_cast<double>(np));
    for (int b = 0; b < nb; ++b) {
        const double* lw = &logw_[static_cast<std::size_t>(b) * np];
        double max_lw = lw[0];
        for (int p = 1; p < np; ++p) max_lw = std::max(max_lw, lw[p]);
        if (!std::isfinite(max_lw))
            throw NumericalError("degenerate block " + std::to_string(b) + " in step " +
                                 std::to_string(k_ + 1) + ": no finite weight");
        auto w = ens_.weights(b);
        double sum = 0.0;
        for (int p = 0; p < np; ++p) {
            w[p] = std::exp(lw[p] - max_lw);
            sum += w[p];
        }
        if (!(sum > 0.0))
            throw NumericalError("degenerate block " + std::to_string(b) + " in step " +
                                 std::to_string(k_ + 1) + ": weights vanished");
        double ess_den = 0.0;
        const double inv_sum = 1.0 / sum;
        for (int p = 0; p < np; ++p) {
            w[p] *= inv_sum;
            ess_den += w[p] * w[p];
        }
        rec.block_loglik[b] = max_lw + std::log(sum) - log_np;
        rec.block_ess[b] = 1.0 / ess_den;
        rec.step_loglik += rec.block_loglik[b];
        if (rec.block_ess[b] < kDegenerateEss) ++rec.degenerate_blocks;
    }

    ens_.check_weights(1e-12);
    observation_rmse_(y, rec);
    for (int b = 0; b < nb; ++b) rec.rmse_total += rec.block_rmse[b];

    ++k_;
    phase_ = Phase::kReady;
    return rec;
}

void BlockParticleFilter::observation_rmse_(std::span<const double> y,
                                            FilterStepRecord& rec) const {
    const int n = model_.n_sites();
    const int ns = model_.n_species();
    const int nl = om_.n_wavelengths();
    const int np = settings_.n_particles;
    const auto& site_block = ens_.block_of_site();

    // Weighted predicted spectra: yhat[v,j] = sum_p w[block(v), p] * (Phi x_p)[v,j].
    thread_local std::vector<double> yhat;
    yhat.assign(y.size(), 0.0);
    const std::vector<double>& phi = cond_.response();
    for (int p = 0; p < np; ++p) {
        auto x = ens_.particle(p);
        for (int v = 0; v < n; ++v) {
            const double wv = ens_.weights(site_block[v])[p];
            if (wv == 0.0) continue;
            double* out = &yhat[static_cast<std::size_t>(v) * nl];
            for (int j = 0; j < nl; ++j) {
                double m = 0.0;
                const double* pj = &phi[static_cast<std::size_t>(j) * ns];
                for (int s = 0; s < ns; ++s) m += pj[s] * x[static_cast<std::size_t>(s) * n + v];
                out[j] += wv * m;
            }
        }
    }
    for (int b = 0; b < ens_.n_blocks(); ++b) {
        double ss = 0.0;
        for (std::int32_t v : ens_.partition().blocks[b]) {
            const double* yv = &y[static_cast<std::size_t>(v) * nl];
            const double* hv = &yhat[static_cast<std::size_t>(v) * nl];
            for (int j = 0; j < nl; ++j) {
                const double r = hv[j] - yv[j];
                ss += r * r;
            }
        }
        rec.block_rmse[b] = std::sqrt(ss);
    }
}

FilterStepRecord BlockParticleFilter::filter_step(std::span<const double> y) {
    resample();
    propose(y);
    return reweight(y);
}

std::vector<double> BlockParticleFilter::estimate() const {
    const int np = settings_.n_particles;
    std::vector<double> est(model_.state_size(), 0.0);
    for (int p = 0; p < np; ++p) {
        auto x = ens_.particle(p);
        for (int b = 0; b < ens_.n_blocks(); ++b) {
            const double w = ens_.weights(b)[p];
            if (w == 0.0) continue;
            for (std::int32_t idx : ens_.block_components(b)) est[idx] += w * x[idx];
        }
    }
    return est;
}

double MemoryObservationSource::load(int k, std::span<double> y) {
    const auto& obs = seq_.at(k);
    if (y.size() != obs.values.size())
        throw UsageError("observation source: buffer length " + std::to_string(y.size()) +
                         " does not match stored field of " +
                         std::to_string(obs.values.size()));
    std::copy(obs.values.begin(), obs.values.end(), y.begin());
    return obs.time;
}

FilterOutput run_filter(BlockParticleFilter& filter, ObservationSource& source,
                        const RunFilterOptions& options) {
    FilterOutput out;
    out.n_steps = source.n_steps();
    out.n_blocks = filter.ensemble().n_blocks();
    if (out.n_steps == 0) return out;

    const std::size_t y_len = static_cast<std::size_t>(filter.model().n_sites()) *
                              filter.observation_model().n_wavelengths();
    std::vector<double> y(y_len);

    out.times.reserve(out.n_steps);
    out.block_loglik.reserve(static_cast<std::size_t>(out.n_steps) * out.n_blocks);
    out.block_ess.reserve(out.block_loglik.capacity());
    out.block_rmse.reserve(out.block_loglik.capacity());
    out.rmse_total.reserve(out.n_steps);
    out.log_evidence.reserve(out.n_steps);

    double cumulative = 0.0;
    for (int k = 0; k < out.n_steps; ++k) {
        const double t = source.load(k, y);
        FilterStepRecord rec = filter.filter_step(y);
        rec.time = t;

        out.times.push_back(t);
        out.block_loglik.insert(out.block_loglik.end(), rec.block_loglik.begin(),
                                rec.block_loglik.end());
        out.block_ess.insert(out.block_ess.end(), rec.block_ess.begin(), rec.block_ess.end());
        out.block_rmse.insert(out.block_rmse.end(), rec.block_rmse.begin(),
                              rec.block_rmse.end());
        out.rmse_total.push_back(rec.rmse_total);
        cumulative += rec.step_loglik;
        out.log_evidence.push_back(cumulative);
        if (rec.degenerate_blocks > 0) {
            out.degenerate_warnings += rec.degenerate_blocks;
            if (out.first_degenerate_step < 0) out.first_degenerate_step = rec.step;
        }

        const bool final_step = k + 1 == out.n_steps;
        if ((options.estimate_stride > 0 && rec.step % options.estimate_stride == 0) ||
            final_step) {
            if (out.estimates.empty() || out.estimates.back().first != rec.step)
                out.estimates.emplace_back(rec.step, filter.estimate());
        }
        if (options.record_weights) {
            const auto& ens = filter.ensemble();
            std::vector<double> w;
            w.reserve(static_cast<std::size_t>(out.n_blocks) * ens.n_particles());
            for (int b = 0; b < out.n_blocks; ++b)
                w.insert(w.end(), ens.weights(b).begin(), ens.weights(b).end());
            out.weights.push_back(std::move(w));
        }
        if (options.on_step) options.on_step(rec);
    }
    return out;
}

} // namespace rdf
