#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdfilter/config.hpp"
#include "rdfilter/dynamics.hpp"
#include "rdfilter/errors.hpp"
#include "rdfilter/io.hpp"
#include "rdfilter/pipeline.hpp"
#include "rdfilter/reaction.hpp"

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("rdf_pipeline_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Small, fast run: 6x6 lattice, 20 dynamics steps, observations every 2 steps.
rdf::RunConfig small_config() {
    rdf::RunConfig c;
    c.side = 6;
    c.spacing = 0.02;
    c.dt = 0.01;
    c.horizon = 0.2;
    c.obs_stride = 2;
    c.n_wavelengths = 5;
    c.n_particles = 8;
    c.block_side = 3;
    c.proposal = "optimal";
    c.simulation_seed = 11;
    c.filter_seed = 12;
    c.init.kind = "bump";
    c.init.bump_amplitude = 0.3;
    c.init.bump_sigma = 0.05;
    c.output.snapshot_times = {0.1, 0.2, 5.0};
    c.output.estimate_stride = 4;
    return c;
}

std::string slurp(const fs::path& p) { return rdf::read_text(p); }

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

int count_files_matching(const fs::path& dir, const std::string& needle) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename().string().find(needle) != std::string::npos) ++n;
    return n;
}

} // namespace

TEST_CASE("steady-state initial field is uniform at the fixed point") {
    rdf::RunConfig cfg = small_config();
    cfg.init.kind = "steady_state";
    const rdf::StateField f = rdf::initial_state(cfg);
    const auto [z1, z2] = rdf::oregonator_steady_state(cfg.reaction);

    CHECK(f.n_sites == 36);
    CHECK(f.n_species == 2);
    CHECK(f.time == 0.0);
    for (double v : f.species(0)) CHECK(v == z1);
    for (double v : f.species(1)) CHECK(v == z2);
}

TEST_CASE("bump initial field perturbs only the activator") {
    rdf::RunConfig cfg = small_config();
    cfg.init.bump_amplitude = 0.4;
    cfg.init.bump_sigma = 0.05;
    cfg.init.bump_v1 = 2;
    cfg.init.bump_v2 = 3;
    const auto [z1, z2] = rdf::oregonator_steady_state(cfg.reaction);
    const rdf::StateField f = rdf::initial_state(cfg);

    for (double v : f.species(1)) CHECK(v == z2);

    const auto act = f.species(0);
    // Peak site gains the full amplitude; a one-column neighbour follows the
    // Gaussian profile exactly.
    const int peak = (2 - 1) * 6 + (3 - 1);
    CHECK(act[peak] == z1 + 0.4);
    const double inv2s2 = 1.0 / (2.0 * 0.05 * 0.05);
    const double d2 = (4 - 3) * cfg.spacing;
    CHECK(act[(2 - 1) * 6 + (4 - 1)] == z1 + 0.4 * std::exp(-(d2 * d2) * inv2s2));
    for (double v : act) CHECK(v >= z1);

    SUBCASE("default centre is the middle of the lattice") {
        rdf::RunConfig c2 = small_config();
        const rdf::StateField f2 = rdf::initial_state(c2);
        const auto a2 = f2.species(0);
        const auto it = std::max_element(a2.begin(), a2.end());
        const int centre = ((6 + 1) / 2 - 1) * 6 + ((6 + 1) / 2 - 1);
        CHECK(static_cast<int>(it - a2.begin()) == centre);
    }

    SUBCASE("negative amplitudes clamp at the positivity floor") {
        rdf::RunConfig c3 = small_config();
        c3.init.bump_amplitude = -1.0;
        c3.init.bump_v1 = 2;
        c3.init.bump_v2 = 3;
        const rdf::StateField f3 = rdf::initial_state(c3);
        const auto a3 = f3.species(0);
        CHECK(a3[peak] == c3.positivity_floor);
    }

    SUBCASE("invalid configurations are rejected before any work") {
        rdf::RunConfig bad = small_config();
        bad.block_side = 4;
        CHECK_THROWS_AS((void)rdf::initial_state(bad), rdf::UsageError);
    }
}

TEST_CASE("dataset generation writes records, headers and snapshots") {
    const rdf::RunConfig cfg = small_config();
    const fs::path dir = fresh_dir("gen");
    const rdf::GenerateSummary sum = rdf::generate_dataset(cfg, dir);

    CHECK(sum.n_steps == 20);
    CHECK(sum.n_observation_records == 10);
    CHECK(sum.directory == dir);

    SUBCASE("manifest resolves back to the generating configuration") {
        const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
        CHECK(manifest.at("artifact") == "dataset");
        CHECK(manifest.at("format_version") == 1);
        CHECK(manifest.at("config") == rdf::config_to_json(cfg));
    }

    SUBCASE("record headers describe the binary layout") {
        const rdf::TrajectoryMeta sm = rdf::read_meta(dir / "states.bin");
        CHECK(sm.kind == "states");
        CHECK(sm.side == 6);
        CHECK(sm.n_sites == 36);
        CHECK(sm.n_channels == 2);
        CHECK(sm.n_records == 11);
        CHECK(sm.dt == 0.02);
        CHECK(sm.time0 == 0.0);
        CHECK(sm.stride == 2);
        CHECK(sm.seed == 11);

        const rdf::TrajectoryMeta om = rdf::read_meta(dir / "observations.bin");
        CHECK(om.kind == "observations");
        CHECK(om.n_channels == 5);
        CHECK(om.n_records == 10);
        CHECK(om.dt == 0.02);
        CHECK(om.time0 == 0.02);

        CHECK(fs::file_size(dir / "states.bin") == 11u * 72u * 8u);
        CHECK(fs::file_size(dir / "observations.bin") == 10u * 180u * 8u);
    }

    SUBCASE("records match an in-memory simulation bit for bit") {
        const rdf::Lattice lat = cfg.make_lattice();
        const rdf::ObservationModel om = cfg.make_observation();
        rdf::OregonatorModel model(lat, cfg.reaction, cfg.make_noise(), cfg.make_integrator(),
                                   cfg.rk4_substeps, cfg.positivity_floor);
        rdf::MemoryTrajectory mem;
        rdf::simulate(model, om, rdf::initial_state(cfg), cfg.n_steps(), cfg.obs_stride,
                      cfg.simulation_seed, mem);
        REQUIRE(mem.states.size() == 10);

        rdf::RecordReader states(dir / "states.bin", 72);
        rdf::RecordReader obs(dir / "observations.bin", 180);
        std::vector<double> rec(72);
        states.read(0, rec);
        for (int i = 0; i < 72; ++i) CHECK(rec[i] == mem.initial.values[i]);
        for (int k = 0; k < 10; ++k) {
            states.read(k + 1, rec);
            for (int i = 0; i < 72; ++i) CHECK(rec[i] == mem.states[k].values[i]);
        }
        std::vector<double> yrec(180);
        for (int k = 0; k < 10; ++k) {
            obs.read(k, yrec);
            for (int i = 0; i < 180; ++i) CHECK(yrec[i] == mem.observations[k].values[i]);
        }
    }

    SUBCASE("snapshots land on in-horizon times only") {
        CHECK(fs::exists(dir / "truth_z1_t0.1.pgm"));
        CHECK(fs::exists(dir / "truth_z2_t0.1.pgm"));
        CHECK(fs::exists(dir / "truth_z1_t0.2.pgm"));
        CHECK(fs::exists(dir / "truth_z2_t0.2.pgm"));
        CHECK(count_files_matching(dir, ".pgm") == 4);

        const std::string img = slurp(dir / "truth_z1_t0.1.pgm");
        const std::string header = "P5\n6 6\n255\n";
        REQUIRE(img.size() == header.size() + 36);
        CHECK(img.substr(0, header.size()) == header);
    }

    SUBCASE("regeneration is byte-identical") {
        const fs::path dir2 = fresh_dir("gen2");
        rdf::generate_dataset(cfg, dir2);
        CHECK(slurp(dir / "states.bin") == slurp(dir2 / "states.bin"));
        CHECK(slurp(dir / "observations.bin") == slurp(dir2 / "observations.bin"));
        CHECK(slurp(dir / "truth_z1_t0.2.pgm") == slurp(dir2 / "truth_z1_t0.2.pgm"));
    }
}

TEST_CASE("pgm snapshots scale fields linearly into 8-bit grey") {
    const fs::path dir = fresh_dir("pgm");

    const std::vector<double> field{0.0, 1.0, 2.0, 4.0};
    rdf::write_pgm(dir / "a.pgm", 2, field);
    const std::string img = slurp(dir / "a.pgm");
    const std::string header = "P5\n2 2\n255\n";
    REQUIRE(img.size() == header.size() + 4);
    const auto px = [&](int i) {
        return static_cast<int>(static_cast<unsigned char>(img[header.size() + i]));
    };
    CHECK(px(0) == 0);
    CHECK(px(1) == 64);
    CHECK(px(2) == 128);
    CHECK(px(3) == 255);

    const std::vector<double> zero(4, 0.0);
    rdf::write_pgm(dir / "z.pgm", 2, zero);
    const std::string zimg = slurp(dir / "z.pgm");
    for (int i = 0; i < 4; ++i)
        CHECK(static_cast<int>(static_cast<unsigned char>(zimg[header.size() + i])) == 0);

    CHECK_THROWS_AS(rdf::write_pgm(dir / "bad.pgm", 3, field), rdf::UsageError);
    const std::vector<double> nanf{0.0, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0};
    CHECK_THROWS_AS(rdf::write_pgm(dir / "nan.pgm", 2, nanf), rdf::NumericalError);
}

TEST_CASE("filtering a dataset produces traces, estimates and a summary") {
    const rdf::RunConfig cfg = small_config();
    const fs::path ds = fresh_dir("flt_ds");
    rdf::generate_dataset(cfg, ds);
    const fs::path out = fresh_dir("flt_out");
    const rdf::FilterSummary sum = rdf::filter_dataset(cfg, ds, out, 1);

    CHECK(sum.n_steps == 10);
    CHECK(sum.directory == out);
    CHECK(std::isfinite(sum.final_rmse));
    CHECK(sum.final_rmse > 0.0);
    CHECK(std::isfinite(sum.total_log_evidence));

    SUBCASE("manifest names the dataset") {
        const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
        CHECK(manifest.at("artifact") == "filter");
        CHECK(manifest.at("dataset") == ds.string());
        CHECK(manifest.at("config") == rdf::config_to_json(cfg));
    }

    SUBCASE("blocks.csv holds one row per block per step") {
        const auto rows = read_csv_rows(out / "blocks.csv");
        REQUIRE(rows.size() == 1 + 10 * 4);
        CHECK(rows[0] == std::vector<std::string>{"step", "block", "log_likelihood", "ess"});
        for (std::size_t r = 1; r < rows.size(); ++r) {
            REQUIRE(rows[r].size() == 4);
            const int step = std::stoi(rows[r][0]);
            const int block = std::stoi(rows[r][1]);
            CHECK(step == static_cast<int>((r - 1) / 4) + 1);
            CHECK(block == static_cast<int>((r - 1) % 4));
            CHECK(std::isfinite(std::stod(rows[r][2])));
            const double ess = std::stod(rows[r][3]);
            CHECK(ess >= 1.0);
            CHECK(ess <= 8.0);
        }
    }

    SUBCASE("metrics.csv interleaves block rmse, total rmse and log evidence") {
        const auto rows = read_csv_rows(out / "metrics.csv");
        REQUIRE(rows.size() == 1 + 10 * 6);
        CHECK(rows[0] == std::vector<std::string>{"step", "time", "metric", "block", "value"});
        double last_logev = 0.0;
        for (int k = 0; k < 10; ++k) {
            const std::size_t base = 1 + static_cast<std::size_t>(k) * 6;
            double block_sum = 0.0;
            for (int b = 0; b < 4; ++b) {
                const auto& row = rows[base + b];
                CHECK(row[2] == "rmse");
                CHECK(row[3] == std::to_string(b));
                block_sum += std::stod(row[4]);
            }
            const auto& total = rows[base + 4];
            CHECK(total[2] == "rmse");
            CHECK(total[3] == "total");
            CHECK(std::stod(total[4]) == block_sum);
            CHECK(std::stod(total[1]) == 0.02 + k * 0.02);
            const auto& logev = rows[base + 5];
            CHECK(logev[2] == "log_evidence");
            CHECK(logev[3] == "total");
            last_logev = std::stod(logev[4]);
        }
        CHECK(last_logev == sum.total_log_evidence);
    }

    SUBCASE("estimates are emitted on the stride, at snapshots and at the end") {
        const rdf::TrajectoryMeta em = rdf::read_meta(out / "estimates.bin");
        CHECK(em.kind == "estimates");
        CHECK(em.n_channels == 2);
        CHECK(em.n_sites == 36);
        CHECK(em.n_records == 4);
        const auto t_of = [](int step) { return 0.02 + (step - 1) * 0.02; };
        CHECK(em.params.at("steps") == nlohmann::json({4, 5, 8, 10}));
        CHECK(em.params.at("times") ==
              nlohmann::json({t_of(4), t_of(5), t_of(8), t_of(10)}));
        CHECK(em.time0 == t_of(4));
        CHECK(fs::file_size(out / "estimates.bin") == 4u * 72u * 8u);

        CHECK(fs::exists(out / "estimate_z1_t0.1.pgm"));
        CHECK(fs::exists(out / "estimate_z2_t0.1.pgm"));
        CHECK(fs::exists(out / "estimate_z1_t0.2.pgm"));
        CHECK(fs::exists(out / "estimate_z2_t0.2.pgm"));
        CHECK(!fs::exists(out / "estimate_z1_t0.pgm"));
        CHECK(count_files_matching(out, ".pgm") == 4);
    }

    SUBCASE("summary.txt lists the headline numbers") {
        std::istringstream in(slurp(out / "summary.txt"));
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
        REQUIRE(lines.size() == 7);
        CHECK(lines[0] == "steps: 10");
        CHECK(lines[1] == "blocks: 4");
        CHECK(lines[2] == "particles: 8");
        CHECK(lines[3] == "proposal: optimal");
        CHECK(lines[4] == "final_rmse_total: " + format_g(sum.final_rmse));
        CHECK(lines[5] == "total_log_evidence: " + format_g(sum.total_log_evidence));
        CHECK(lines[6] == "degenerate_warnings: " + std::to_string(sum.degenerate_warnings));
    }

    SUBCASE("re-running the filter is byte-identical") {
        const fs::path out2 = fresh_dir("flt_out2");
        rdf::filter_dataset(cfg, ds, out2, 1);
        CHECK(slurp(out / "blocks.csv") == slurp(out2 / "blocks.csv"));
        CHECK(slurp(out / "metrics.csv") == slurp(out2 / "metrics.csv"));
        CHECK(slurp(out / "estimates.bin") == slurp(out2 / "estimates.bin"));
        CHECK(slurp(out / "summary.txt") == slurp(out2 / "summary.txt"));
    }

    SUBCASE("estimate stride zero keeps only forced records") {
        rdf::RunConfig sparse = cfg;
        sparse.output.estimate_stride = 0;
        sparse.output.snapshot_times = {};
        const fs::path out3 = fresh_dir("flt_out3");
        rdf::filter_dataset(sparse, ds, out3, 1);
        const rdf::TrajectoryMeta em = rdf::read_meta(out3 / "estimates.bin");
        CHECK(em.n_records == 1);
        CHECK(em.params.at("steps") == nlohmann::json({10}));
        CHECK(count_files_matching(out3, ".pgm") == 0);
    }
}

TEST_CASE("filter rejects datasets that do not match the configuration") {
    const rdf::RunConfig cfg = small_config();
    const fs::path ds = fresh_dir("mm_ds");
    rdf::generate_dataset(cfg, ds);
    const fs::path out = fresh_dir("mm_out");

    SUBCASE("missing dataset") {
        const fs::path empty = fresh_dir("mm_empty");
        CHECK_THROWS_WITH_AS((void)rdf::filter_dataset(cfg, empty, out, 1),
                             doctest::Contains("no observations.bin"), rdf::UsageError);
    }
    SUBCASE("lattice mismatch") {
        rdf::RunConfig c = cfg;
        c.side = 4;
        c.block_side = 2;
        CHECK_THROWS_WITH_AS((void)rdf::filter_dataset(c, ds, out, 1),
                             doctest::Contains("sites"), rdf::UsageError);
    }
    SUBCASE("wavelength mismatch") {
        rdf::RunConfig c = cfg;
        c.n_wavelengths = 6;
        CHECK_THROWS_WITH_AS((void)rdf::filter_dataset(c, ds, out, 1),
                             doctest::Contains("wavelengths"), rdf::UsageError);
    }
    SUBCASE("interval mismatch") {
        rdf::RunConfig c = cfg;
        c.obs_stride = 1;
        CHECK_THROWS_WITH_AS((void)rdf::filter_dataset(c, ds, out, 1),
                             doctest::Contains("observation interval"), rdf::UsageError);
    }
    SUBCASE("thread count must be positive") {
        CHECK_THROWS_WITH_AS((void)rdf::filter_dataset(cfg, ds, out, 0),
                             doctest::Contains("thread count"), rdf::UsageError);
    }
}

TEST_CASE("a numerical failure mid-run leaves a checkpoint behind") {
    rdf::RunConfig cfg = small_config();
    cfg.proposal = "bootstrap";
    const fs::path ds = fresh_dir("chk_ds");
    rdf::generate_dataset(cfg, ds);

    // Poison the third observation record so the filter collapses at step 3.
    {
        rdf::RecordReader reader(ds / "observations.bin", 180);
        std::vector<std::vector<double>> records;
        for (int k = 0; k < reader.n_records(); ++k) {
            std::vector<double> rec(180);
            reader.read(k, rec);
            records.push_back(std::move(rec));
        }
        std::fill(records[2].begin(), records[2].end(),
                  std::numeric_limits<double>::quiet_NaN());
        rdf::RecordWriter writer(ds / "observations.bin", 180);
        for (const auto& rec : records) writer.append(rec);
        writer.finalize();
    }

    const fs::path out = fresh_dir("chk_out");
    CHECK_THROWS_AS((void)rdf::filter_dataset(cfg, ds, out, 1), rdf::NumericalError);

    const auto chk = nlohmann::json::parse(slurp(out / "checkpoint.json"));
    CHECK(chk.at("completed_steps") == 2);
    CHECK(chk.at("total_steps") == 10);
    CHECK(std::isfinite(chk.at("cumulative_log_evidence").get<double>()));
    CHECK(!chk.at("error").get<std::string>().empty());

    // Partial traces survive, but no summary is written.
    const auto rows = read_csv_rows(out / "blocks.csv");
    CHECK(rows.size() == 1 + 2 * 4);
    CHECK(!fs::exists(out / "summary.txt"));
}

TEST_CASE("comparison lines up two runs step by step") {
    const rdf::RunConfig cfg = small_config();
    const fs::path ds = fresh_dir("cmp_ds");
    rdf::generate_dataset(cfg, ds);
    const fs::path out_a = fresh_dir("cmp_a");
    rdf::filter_dataset(cfg, ds, out_a, 1);
    rdf::RunConfig boot = cfg;
    boot.proposal = "bootstrap";
    const fs::path out_b = fresh_dir("cmp_b");
    rdf::filter_dataset(boot, ds, out_b, 1);

    SUBCASE("self-comparison is a tie on both measures") {
        const fs::path csv = fresh_dir("cmp_csv") / "nested" / "self.csv";
        const rdf::CompareSummary cs = rdf::compare_runs(out_a, out_a, csv);
        CHECK(cs.n_steps == 10);
        CHECK(cs.text.find("compared 10 steps") != std::string::npos);
        CHECK(cs.text.find("lower: tie") != std::string::npos);
        CHECK(cs.text.find("higher: tie") != std::string::npos);

        const auto rows = read_csv_rows(csv);
        REQUIRE(rows.size() == 11);
        CHECK(rows[0] == std::vector<std::string>{"step", "time", "rmse_a", "rmse_b",
                                                  "log_evidence_a", "log_evidence_b"});
        for (std::size_t r = 1; r < rows.size(); ++r) {
            CHECK(rows[r][2] == rows[r][3]);
            CHECK(rows[r][4] == rows[r][5]);
        }
    }

    SUBCASE("distinct runs report a winner per measure") {
        const rdf::CompareSummary cs = rdf::compare_runs(out_a, out_b, fs::path());
        CHECK(cs.n_steps == 10);
        CHECK(cs.text.find(out_a.string()) != std::string::npos);
        CHECK(cs.text.find(out_b.string()) != std::string::npos);
        CHECK(cs.text.find("final rmse_total:") != std::string::npos);
        CHECK(cs.text.find("final log_evidence:") != std::string::npos);
    }

    SUBCASE("directories without metrics are rejected") {
        const fs::path empty = fresh_dir("cmp_empty");
        CHECK_THROWS_WITH_AS((void)rdf::compare_runs(empty, out_b, fs::path()),
                             doctest::Contains("not a filter output directory"),
                             rdf::UsageError);
    }

    SUBCASE("header and alignment problems are named") {
        const fs::path badhdr = fresh_dir("cmp_badhdr");
        rdf::atomic_write_text(badhdr / "metrics.csv", "step,metric,value\n");
        CHECK_THROWS_WITH_AS((void)rdf::compare_runs(badhdr, out_b, fs::path()),
                             doctest::Contains("unexpected header"), rdf::UsageError);

        const auto fake_run = [](const fs::path& dir, std::vector<int> steps) {
            std::ostringstream os;
            os << "step,time,metric,block,value\n";
            for (int s : steps) {
                os << s << ',' << 0.02 * s << ",rmse,total,1.5\n";
                os << s << ',' << 0.02 * s << ",log_evidence,total,-2\n";
            }
            rdf::atomic_write_text(dir / "metrics.csv", os.str());
        };
        const fs::path one = fresh_dir("cmp_one");
        const fs::path two = fresh_dir("cmp_two");
        fake_run(one, {1});
        fake_run(two, {1, 2});
        CHECK_THROWS_WITH_AS((void)rdf::compare_runs(one, two, fs::path()),
                             doctest::Contains("different step counts"), rdf::UsageError);

        const fs::path shifted = fresh_dir("cmp_shift");
        fake_run(shifted, {2});
        CHECK_THROWS_WITH_AS((void)rdf::compare_runs(one, shifted, fs::path()),
                             doctest::Contains("misaligned"), rdf::UsageError);

        const fs::path hollow = fresh_dir("cmp_hollow");
        rdf::atomic_write_text(hollow / "metrics.csv", "step,time,metric,block,value\n");
        CHECK_THROWS_WITH_AS((void)rdf::compare_runs(hollow, two, fs::path()),
                             doctest::Contains("no per-step totals"), rdf::UsageError);
    }

    SUBCASE("tie detection prefers neither side") {
        const rdf::CompareSummary cs = rdf::compare_runs(out_b, out_b, fs::path());
        CHECK(cs.text.find("lower: tie") != std::string::npos);
    }
}
