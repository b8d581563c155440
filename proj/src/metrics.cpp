#include "rdfilter/metrics.hpp"

#include <cmath>
#include <string>

#include "rdfilter/errors.hpp"

namespace rdf {

double rmse_block(std::span<const double> predicted, std::span<const double> observed) {
    if (predicted.size() != observed.size())
        throw UsageError("rmse_block: predicted length " + std::to_string(predicted.size()) +
                         " does not match observed length " + std::to_string(observed.size()));
    double ss = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double r = predicted[i] - observed[i];
        ss += r * r;
    }
    return std::sqrt(ss);
}

double rmse_total(std::span<const double> per_block) {
    double acc = 0.0;
    for (double v : per_block) acc += v;
    return acc;
}

std::vector<double> log_evidence_trace(std::span<const double> values, int n_steps,
                                       int n_blocks) {
    if (n_steps < 0 || n_blocks < 1)
        throw UsageError("log_evidence_trace: invalid dimensions");
    if (values.size() != static_cast<std::size_t>(n_steps) * n_blocks)
        throw UsageError("log_evidence_trace: expected " +
                         std::to_string(static_cast<long>(n_steps) * n_blocks) +
                         " values, got " + std::to_string(values.size()));
    std::vector<double> out(n_steps);
    double acc = 0.0;
    for (int k = 0; k < n_steps; ++k) {
        for (int b = 0; b < n_blocks; ++b) {
            const double v = values[static_cast<std::size_t>(k) * n_blocks + b];
            if (!std::isfinite(v))
                throw NumericalError("log_evidence_trace: non-finite contribution at step " +
                                     std::to_string(k + 1) + ", block " + std::to_string(b));
            acc += v;
        }
        out[k] = acc;
    }
    return out;
}

double effective_sample_size(std::span<const double> weights) {
    if (weights.empty()) throw UsageError("effective_sample_size: empty weight vector");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0))
            throw UsageError("effective_sample_size: weights must be nonnegative");
        sum += w;
        sum_sq += w * w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw UsageError("effective_sample_size: weights sum to " + std::to_string(sum) +
                         ", not a normalized simplex vector");
    return 1.0 / sum_sq;
}

void MetricTrace::validate() const {
    const auto expect = [&](std::size_t got, std::size_t want, const char* what) {
        if (got != want)
            throw UsageError(std::string("metric trace: ") + what + " has " +
                             std::to_string(got) + " entries, expected " +
                             std::to_string(want));
    };
    const std::size_t ks = static_cast<std::size_t>(n_steps);
    expect(times.size(), ks, "times");
    expect(rmse_total.size(), ks, "rmse_total");
    expect(log_evidence.size(), ks, "log_evidence");
    expect(block_rmse.size(), ks * n_blocks, "block_rmse");
    expect(block_loglik.size(), ks * n_blocks, "block_loglik");
    expect(block_ess.size(), ks * n_blocks, "block_ess");
    for (const auto* series : {&times, &rmse_total, &log_evidence, &block_rmse, &block_loglik,
                               &block_ess})
        for (double v : *series)
            if (!std::isfinite(v)) throw NumericalError("metric trace: non-finite value");
}

} // namespace rdf
