#pragma once

// Filtering diagnostics: observation-space error norms, evidence traces,
// effective sample size.

#include <span>
#include <vector>

namespace rdf {

// Euclidean norm of the residual between predicted and observed values over
// one block (no normalization by element count).
double rmse_block(std::span<const double> predicted, std::span<const double> observed);

// Aggregate accuracy: the sum of per-block values.
double rmse_total(std::span<const double> per_block);

// Cumulative log-evidence: values is row-major n_steps x n_blocks of
// incremental per-block log-likelihoods; entry k of the result is the sum of
// all contributions up to and including step k.
std::vector<double> log_evidence_trace(std::span<const double> values, int n_steps,
                                       int n_blocks);

// Degeneracy diagnostic 1 / sum w^2 for a normalized weight vector; ranges
// from 1 (one-hot) to n (uniform).
double effective_sample_size(std::span<const double> weights);

// Per-step diagnostic series for one filter run.
struct MetricTrace {
    int n_steps = 0;
    int n_blocks = 0;
    std::vector<double> times;        // per step
    std::vector<double> rmse_total;   // per step
    std::vector<double> log_evidence; // per step, cumulative
    std::vector<double> block_rmse;   // n_steps x n_blocks
    std::vector<double> block_loglik; // n_steps x n_blocks
    std::vector<double> block_ess;    // n_steps x n_blocks

    void validate() const; // length and finiteness checks
};

} // namespace rdf
