#include "rdfilter/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <vector>

#include "rdfilter/errors.hpp"
#include "rdfilter/filter.hpp"
#include "rdfilter/io.hpp"
#include "rdfilter/metrics.hpp"

namespace rdf {

namespace fs = std::filesystem;

namespace {

std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_time_label(double t) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", t);
    return buf;
}

// Truth/estimate snapshot image of one species field.
void write_species_pgm(const fs::path& dir, const std::string& prefix, int species,
                       double time, int side, std::span<const double> field) {
    const std::string name =
        prefix + "_z" + std::to_string(species) + "_t" + format_time_label(time) + ".pgm";
    write_pgm(dir / name, side, field);
}

// Requested snapshot times mapped to record steps (multiples of the
// observation stride); times beyond the horizon are ignored.
std::set<int> snapshot_steps(const RunConfig& cfg) {
    std::set<int> steps;
    const double record_dt = cfg.dt * cfg.obs_stride;
    const int last = cfg.n_steps() / cfg.obs_stride * cfg.obs_stride;
    for (double t : cfg.output.snapshot_times) {
        const int k = static_cast<int>(std::llround(t / record_dt)) * cfg.obs_stride;
        if (k <= last) steps.insert(std::max(k, 0));
    }
    return steps;
}

nlohmann::json dataset_manifest(const RunConfig& cfg) {
    return nlohmann::json{{"artifact", "dataset"},
                          {"format_version", 1},
                          {"config", config_to_json(cfg)}};
}

} // namespace

StateField initial_state(const RunConfig& cfg) {
    cfg.validate();
    const auto [z1, z2] = oregonator_steady_state(cfg.reaction);
    const int n = cfg.side * cfg.side;
    StateField f = StateField::constant(n, 2, 0.0);
    std::fill(f.species(0).begin(), f.species(0).end(), z1);
    std::fill(f.species(1).begin(), f.species(1).end(), z2);

    if (cfg.init.kind == "bump") {
        const int c1 = cfg.init.bump_v1 > 0 ? cfg.init.bump_v1 : (cfg.side + 1) / 2;
        const int c2 = cfg.init.bump_v2 > 0 ? cfg.init.bump_v2 : (cfg.side + 1) / 2;
        const double inv2s2 = 1.0 / (2.0 * cfg.init.bump_sigma * cfg.init.bump_sigma);
        auto act = f.species(0);
        for (int v1 = 1; v1 <= cfg.side; ++v1)
            for (int v2 = 1; v2 <= cfg.side; ++v2) {
                const double d1 = (v1 - c1) * cfg.spacing;
                const double d2 = (v2 - c2) * cfg.spacing;
                const int v = (v1 - 1) * cfg.side + (v2 - 1);
                act[v] += cfg.init.bump_amplitude * std::exp(-(d1 * d1 + d2 * d2) * inv2s2);
                act[v] = std::max(act[v], cfg.positivity_floor);
            }
    }
    return f;
}

namespace {

// Streams simulation output straight to disk.
class FileTrajectorySink : public TrajectorySink {
public:
    FileTrajectorySink(const fs::path& dir, const RunConfig& cfg, RecordWriter& states,
                       RecordWriter& observations)
        : dir_(dir), cfg_(cfg), states_(states), observations_(observations),
          snaps_(snapshot_steps(cfg)) {}

    void on_initial(const StateField& state) override {
        states_.append(state.values);
        maybe_snapshot(0, state);
    }

    void on_sample(int step, const StateField& state, const ObservationField& obs) override {
        states_.append(state.values);
        observations_.append(obs.values);
        maybe_snapshot(step, state);
    }

private:
    void maybe_snapshot(int step, const StateField& state) {
        if (!snaps_.count(step)) return;
        for (int s = 0; s < state.n_species; ++s)
            write_species_pgm(dir_, "truth", s + 1, state.time, cfg_.side, state.species(s));
    }

    const fs::path& dir_;
    const RunConfig& cfg_;
    RecordWriter& states_;
    RecordWriter& observations_;
    std::set<int> snaps_;
};

} // namespace

GenerateSummary generate_dataset(const RunConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);

    const Lattice lat = cfg.make_lattice();
    const ObservationModel om = cfg.make_observation();
    OregonatorModel model(lat, cfg.reaction, cfg.make_noise(), cfg.make_integrator(),
                          cfg.rk4_substeps, cfg.positivity_floor);
    const StateField init = initial_state(cfg);

    atomic_write_text(out_dir / "manifest.json", dataset_manifest(cfg).dump(2) + "\n");

    const int n = lat.n_sites();
    RecordWriter states(out_dir / "states.bin", static_cast<std::size_t>(n) * 2);
    RecordWriter observations(out_dir / "observations.bin",
                              static_cast<std::size_t>(n) * cfg.n_wavelengths);

    FileTrajectorySink sink(out_dir, cfg, states, observations);
    simulate(model, om, init, cfg.n_steps(), cfg.obs_stride, cfg.simulation_seed, sink);

    states.finalize();
    observations.finalize();

    TrajectoryMeta sm;
    sm.kind = "states";
    sm.side = cfg.side;
    sm.n_sites = n;
    sm.n_channels = 2;
    sm.n_records = states.n_records();
    sm.dt = cfg.dt * cfg.obs_stride;
    sm.time0 = 0.0;
    sm.stride = cfg.obs_stride;
    sm.seed = cfg.simulation_seed;
    sm.params = config_to_json(cfg);
    write_meta(out_dir / "states.bin", sm);

    TrajectoryMeta obsm = sm;
    obsm.kind = "observations";
    obsm.n_channels = cfg.n_wavelengths;
    obsm.n_records = observations.n_records();
    obsm.time0 = cfg.dt * cfg.obs_stride;
    write_meta(out_dir / "observations.bin", obsm);

    GenerateSummary summary;
    summary.n_steps = cfg.n_steps();
    summary.n_observation_records = observations.n_records();
    summary.directory = out_dir;
    return summary;
}

namespace {

class FileObservationSource : public ObservationSource {
public:
    FileObservationSource(const fs::path& bin, const TrajectoryMeta& meta)
        : reader_(bin, meta.record_len()), meta_(meta) {
        if (reader_.n_records() != meta.n_records)
            throw UsageError("'" + bin.string() + "' holds " +
                             std::to_string(reader_.n_records()) + " records but its header "
                             "declares " + std::to_string(meta.n_records));
    }

    int n_steps() const override { return reader_.n_records(); }

    double load(int k, std::span<double> y) override {
        reader_.read(k, y);
        return meta_.time0 + k * meta_.dt;
    }

private:
    RecordReader reader_;
    TrajectoryMeta meta_;
};

} // namespace

FilterSummary filter_dataset(const RunConfig& cfg, const fs::path& dataset_dir,
                             const fs::path& out_dir, int n_threads) {
    cfg.validate();
    if (n_threads < 1) throw UsageError("thread count must be >= 1");

    const fs::path obs_bin = dataset_dir / "observations.bin";
    if (!fs::exists(obs_bin) || !fs::exists(meta_path_for(obs_bin)))
        throw UsageError("dataset directory '" + dataset_dir.string() +
                         "' has no observations.bin with header");
    const TrajectoryMeta meta = read_meta(obs_bin);

    const Lattice lat = cfg.make_lattice();
    if (meta.n_sites != lat.n_sites())
        throw UsageError("dataset has " + std::to_string(meta.n_sites) +
                         " sites, config expects " + std::to_string(lat.n_sites()));
    if (meta.side != cfg.side)
        throw UsageError("dataset lattice side is " + std::to_string(meta.side) +
                         ", config expects " + std::to_string(cfg.side));
    if (meta.n_channels != cfg.n_wavelengths)
        throw UsageError("dataset has " + std::to_string(meta.n_channels) +
                         " wavelengths, config expects " + std::to_string(cfg.n_wavelengths));
    const double record_dt = cfg.dt * cfg.obs_stride;
    if (std::abs(meta.dt - record_dt) > 1e-12 * std::max(1.0, std::abs(record_dt)))
        throw UsageError("dataset observation interval is " + format_g(meta.dt) +
                         ", config expects " + format_g(record_dt));

    fs::create_directories(out_dir);
    {
        nlohmann::json manifest{{"artifact", "filter"},
                                {"format_version", 1},
                                {"config", config_to_json(cfg)},
                                {"dataset", dataset_dir.string()}};
        atomic_write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    }

    // The filter advances one transition per observation record, so its
    // effective step is the record interval.
    NoiseModel nm = cfg.make_noise();
    nm.dt = record_dt;
    const ObservationModel om = cfg.make_observation();
    OregonatorModel model(lat, cfg.reaction, nm, cfg.make_integrator(), cfg.rk4_substeps,
                          cfg.positivity_floor);

    FilterSettings settings;
    settings.n_particles = cfg.n_particles;
    settings.proposal = cfg.make_proposal();
    settings.resampling = cfg.make_resampling();
    settings.seed = cfg.filter_seed;
    settings.n_threads = n_threads;

    BlockParticleFilter filter(model, om, make_partition(lat, cfg.block_side), settings);
    const StateField x0 = initial_state(cfg);
    filter.init_dirac(x0.values);

    FileObservationSource source(obs_bin, meta);

    AtomicTextFile blocks_csv(out_dir / "blocks.csv");
    blocks_csv.stream() << "step,block,log_likelihood,ess\n";
    AtomicTextFile metrics_csv(out_dir / "metrics.csv");
    metrics_csv.stream() << "step,time,metric,block,value\n";
    RecordWriter estimates(out_dir / "estimates.bin", static_cast<std::size_t>(2) * meta.n_sites);
    std::vector<int> estimate_steps;
    std::vector<double> estimate_times;

    const std::set<int> snaps = snapshot_steps(cfg);
    if (snaps.count(0)) {
        for (int s = 0; s < 2; ++s)
            write_species_pgm(out_dir, "estimate", s + 1, 0.0, cfg.side, x0.species(s));
    }

    FilterSummary summary;
    summary.directory = out_dir;
    double cumulative = 0.0;

    RunFilterOptions options;
    options.estimate_stride = 0;
    options.on_step = [&](const FilterStepRecord& rec) {
        for (std::size_t b = 0; b < rec.block_loglik.size(); ++b) {
            blocks_csv.stream() << rec.step << ',' << b << ',' << format_g(rec.block_loglik[b])
                                << ',' << format_g(rec.block_ess[b]) << '\n';
            metrics_csv.stream() << rec.step << ',' << format_g(rec.time) << ",rmse," << b
                                 << ',' << format_g(rec.block_rmse[b]) << '\n';
        }
        cumulative += rec.step_loglik;
        metrics_csv.stream() << rec.step << ',' << format_g(rec.time) << ",rmse,total,"
                             << format_g(rec.rmse_total) << '\n';
        metrics_csv.stream() << rec.step << ',' << format_g(rec.time)
                             << ",log_evidence,total," << format_g(cumulative) << '\n';

        summary.n_steps = rec.step;
        summary.final_rmse = rec.rmse_total;
        summary.total_log_evidence = cumulative;
        if (rec.degenerate_blocks > 0) {
            summary.degenerate_warnings += rec.degenerate_blocks;
            if (summary.first_degenerate_step < 0) summary.first_degenerate_step = rec.step;
        }

        const bool want_estimate =
            (cfg.output.estimate_stride > 0 && rec.step % cfg.output.estimate_stride == 0) ||
            rec.step == source.n_steps() || snaps.count(rec.step * cfg.obs_stride) > 0;
        if (want_estimate) {
            const std::vector<double> est = filter.estimate();
            if (estimate_steps.empty() || estimate_steps.back() != rec.step) {
                estimates.append(est);
                estimate_steps.push_back(rec.step);
                estimate_times.push_back(rec.time);
            }
            if (snaps.count(rec.step * cfg.obs_stride) > 0) {
                const std::span<const double> es(est);
                for (int s = 0; s < 2; ++s)
                    write_species_pgm(out_dir, "estimate", s + 1, rec.time, cfg.side,
                                      es.subspan(static_cast<std::size_t>(s) * meta.n_sites,
                                                 meta.n_sites));
            }
        }
    };

    auto finalize_outputs = [&]() {
        blocks_csv.finalize();
        metrics_csv.finalize();
        estimates.finalize();
        TrajectoryMeta em;
        em.kind = "estimates";
        em.side = cfg.side;
        em.n_sites = meta.n_sites;
        em.n_channels = 2;
        em.n_records = estimates.n_records();
        em.dt = record_dt * std::max(cfg.output.estimate_stride, 1);
        em.time0 = estimate_times.empty() ? 0.0 : estimate_times.front();
        em.stride = cfg.obs_stride;
        em.seed = cfg.filter_seed;
        em.params = nlohmann::json{{"steps", estimate_steps},
                                   {"times", estimate_times},
                                   {"config", config_to_json(cfg)}};
        write_meta(out_dir / "estimates.bin", em);
    };

    try {
        run_filter(filter, source, options);
    } catch (const NumericalError& e) {
        finalize_outputs();
        nlohmann::json chk{{"error", e.what()},
                           {"completed_steps", summary.n_steps},
                           {"total_steps", source.n_steps()},
                           {"cumulative_log_evidence", cumulative}};
        atomic_write_text(out_dir / "checkpoint.json", chk.dump(2) + "\n");
        throw;
    }

    finalize_outputs();

    std::ostringstream st;
    st << "steps: " << summary.n_steps << "\n"
       << "blocks: " << filter.ensemble().n_blocks() << "\n"
       << "particles: " << cfg.n_particles << "\n"
       << "proposal: " << cfg.proposal << "\n"
       << "final_rmse_total: " << format_g(summary.final_rmse) << "\n"
       << "total_log_evidence: " << format_g(summary.total_log_evidence) << "\n"
       << "degenerate_warnings: " << summary.degenerate_warnings << "\n";
    if (summary.first_degenerate_step >= 0)
        st << "first_degenerate_step: " << summary.first_degenerate_step << "\n";
    atomic_write_text(out_dir / "summary.txt", st.str());

    return summary;
}

namespace {

struct RunSeries {
    std::vector<int> steps;
    std::vector<double> times;
    std::vector<double> rmse_total;
    std::vector<double> log_evidence;
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    return out;
}

RunSeries read_run_series(const fs::path& dir) {
    const fs::path csv = dir / "metrics.csv";
    if (!fs::exists(csv))
        throw UsageError("'" + dir.string() + "' is not a filter output directory (no "
                         "metrics.csv)");
    std::istringstream in(read_text(csv));
    std::string line;
    if (!std::getline(in, line) || line != "step,time,metric,block,value")
        throw UsageError("'" + csv.string() + "' has an unexpected header");
    RunSeries rs;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 5)
            throw UsageError("'" + csv.string() + "' line " + std::to_string(line_no) +
                             " is malformed");
        if (cells[3] != "total") continue;
        const int step = std::stoi(cells[0]);
        const double time = std::stod(cells[1]);
        const double value = std::stod(cells[4]);
        if (cells[2] == "rmse") {
            rs.steps.push_back(step);
            rs.times.push_back(time);
            rs.rmse_total.push_back(value);
        } else if (cells[2] == "log_evidence") {
            rs.log_evidence.push_back(value);
        }
    }
    if (rs.steps.empty())
        throw UsageError("'" + csv.string() + "' holds no per-step totals");
    if (rs.log_evidence.size() != rs.rmse_total.size())
        throw UsageError("'" + csv.string() + "' has misaligned rmse and log-evidence series");
    return rs;
}

} // namespace

CompareSummary compare_runs(const fs::path& dir_a, const fs::path& dir_b,
                            const fs::path& out_csv) {
    const RunSeries a = read_run_series(dir_a);
    const RunSeries b = read_run_series(dir_b);
    if (a.steps.size() != b.steps.size())
        throw UsageError("runs have different step counts: " + std::to_string(a.steps.size()) +
                         " vs " + std::to_string(b.steps.size()));
    for (std::size_t k = 0; k < a.steps.size(); ++k)
        if (a.steps[k] != b.steps[k])
            throw UsageError("runs are misaligned at row " + std::to_string(k + 1) + ": step " +
                             std::to_string(a.steps[k]) + " vs " + std::to_string(b.steps[k]));

    std::ostringstream csv;
    csv << "step,time,rmse_a,rmse_b,log_evidence_a,log_evidence_b\n";
    for (std::size_t k = 0; k < a.steps.size(); ++k)
        csv << a.steps[k] << ',' << format_g(a.times[k]) << ',' << format_g(a.rmse_total[k])
            << ',' << format_g(b.rmse_total[k]) << ',' << format_g(a.log_evidence[k]) << ','
            << format_g(b.log_evidence[k]) << '\n';
    if (!out_csv.empty()) {
        if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
        atomic_write_text(out_csv, csv.str());
    }

    const std::size_t last = a.steps.size() - 1;
    const std::string la = dir_a.string();
    const std::string lb = dir_b.string();
    auto pick = [&](double va, double vb, bool lower) {
        if (va == vb) return std::string("tie");
        return ((va < vb) == lower) ? la : lb;
    };
    std::ostringstream text;
    text << "compared " << a.steps.size() << " steps\n"
         << "final rmse_total: " << la << "=" << format_g(a.rmse_total[last]) << " " << lb
         << "=" << format_g(b.rmse_total[last]) << " -> lower: "
         << pick(a.rmse_total[last], b.rmse_total[last], true) << "\n"
         << "final log_evidence: " << la << "=" << format_g(a.log_evidence[last]) << " " << lb
         << "=" << format_g(b.log_evidence[last]) << " -> higher: "
         << pick(a.log_evidence[last], b.log_evidence[last], false) << "\n";

    CompareSummary cs;
    cs.n_steps = static_cast<int>(a.steps.size());
    cs.text = text.str();
    return cs;
}

} // namespace rdf
