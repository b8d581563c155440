#pragma once

// End-to-end orchestration: dataset generation, filtering against a stored
// dataset, and run comparison. All artifacts live under caller-chosen
// directories; file formats are documented in the README.

#include <filesystem>
#include <string>

#include "rdfilter/config.hpp"
#include "rdfilter/dynamics.hpp"

namespace rdf {

// Initial condition from the config: the homogeneous steady state, optionally
// with a Gaussian bump on the activator for reproducible pattern placement.
StateField initial_state(const RunConfig& cfg);

struct GenerateSummary {
    int n_steps = 0;
    int n_observation_records = 0;
    std::filesystem::path directory;
};

// Simulates ground truth and observations with the simulation seed; writes
// states.bin/observations.bin (+ .meta headers), truth PGM snapshots, and
// manifest.json echoing the full resolved configuration.
GenerateSummary generate_dataset(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct FilterSummary {
    int n_steps = 0;
    double final_rmse = 0.0;
    double total_log_evidence = 0.0;
    int degenerate_warnings = 0;
    int first_degenerate_step = -1;
    std::filesystem::path directory;
};

// Runs the block particle filter over a generated dataset; writes blocks.csv,
// metrics.csv, estimates.bin, estimate PGM snapshots, summary.txt, and
// manifest.json. On numerical failure a checkpoint.json records the completed
// prefix before the error propagates.
FilterSummary filter_dataset(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                             const std::filesystem::path& out_dir, int n_threads);

struct CompareSummary {
    int n_steps = 0;
    std::string text; // which run dominates each metric at the final step
};

// Aligns the metrics of two filter runs; writes a side-by-side CSV and
// returns the final-step comparison.
CompareSummary compare_runs(const std::filesystem::path& dir_a,
                            const std::filesystem::path& dir_b,
                            const std::filesystem::path& out_csv);

} // namespace rdf
