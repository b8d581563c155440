#include "rdfilter.h"

#include <cstring>
#include <new>
#include <string>

#include "rdfilter/config.hpp"
#include "rdfilter/errors.hpp"
#include "rdfilter/pipeline.hpp"
#include "rdfilter/reaction.hpp"

// The opaque handle keeps both the typed config and its JSON form so dotted
// overrides can be applied and re-validated incrementally.
struct rdf_config {
    nlohmann::json json;
    rdf::RunConfig resolved;
};

namespace {

void fill_error(char* err, size_t err_len, const char* what) {
    if (!err || err_len == 0) return;
    std::strncpy(err, what, err_len - 1);
    err[err_len - 1] = '\0';
}

// Maps exceptions escaping the C++ core onto status codes.
template <typename Fn>
int guarded(char* err, size_t err_len, Fn&& fn) {
    try {
        fn();
        return RDF_OK;
    } catch (const rdf::UsageError& e) {
        fill_error(err, err_len, e.what());
        return RDF_ERR_USAGE;
    } catch (const rdf::NumericalError& e) {
        fill_error(err, err_len, e.what());
        return RDF_ERR_NUMERICAL;
    } catch (const std::bad_alloc&) {
        fill_error(err, err_len, "out of memory");
        return RDF_ERR_NUMERICAL;
    } catch (const std::exception& e) {
        fill_error(err, err_len, e.what());
        return RDF_ERR_NUMERICAL;
    }
}

} // namespace

extern "C" {

const char* rdf_version(void) { return "0.1.0"; }

rdf_config* rdf_config_create(void) {
    try {
        auto* cfg = new rdf_config;
        cfg->resolved = rdf::RunConfig{};
        cfg->json = rdf::config_to_json(cfg->resolved);
        return cfg;
    } catch (...) {
        return nullptr;
    }
}

void rdf_config_free(rdf_config* cfg) { delete cfg; }

rdf_config* rdf_config_load(const char* path, char* err, size_t err_len) {
    rdf_config* cfg = nullptr;
    const int rc = guarded(err, err_len, [&] {
        if (!path) throw rdf::UsageError("config path is null");
        rdf::RunConfig resolved = rdf::load_config(path);
        cfg = new rdf_config{rdf::config_to_json(resolved), std::move(resolved)};
    });
    if (rc != RDF_OK) return nullptr;
    return cfg;
}

int rdf_config_set(rdf_config* cfg, const char* key, const char* value, char* err,
                   size_t err_len) {
    return guarded(err, err_len, [&] {
        if (!cfg || !key || !value) throw rdf::UsageError("null argument to rdf_config_set");
        nlohmann::json j = cfg->json;
        rdf::apply_override(j, key, value);
        // Strict parse (unknown keys / wrong types fail here); cross-field
        // validation waits until the config is used, so intermediate override
        // states such as resizing the lattice before the blocks are allowed.
        cfg->resolved = rdf::config_from_json(j, /*validated=*/false);
        cfg->json = rdf::config_to_json(cfg->resolved);
    });
}

size_t rdf_config_dump(const rdf_config* cfg, char* buf, size_t buf_len, char* err,
                       size_t err_len) {
    std::string text;
    const int rc = guarded(err, err_len, [&] {
        if (!cfg) throw rdf::UsageError("null config");
        text = rdf::serialize_config(cfg->resolved);
    });
    if (rc != RDF_OK) return 0;
    if (buf && buf_len > 0) {
        const size_t n = text.size() < buf_len - 1 ? text.size() : buf_len - 1;
        std::memcpy(buf, text.data(), n);
        buf[n] = '\0';
    }
    return text.size() + 1;
}

int rdf_steady_state(const rdf_config* cfg, double* z1, double* z2, char* err,
                     size_t err_len) {
    return guarded(err, err_len, [&] {
        if (!cfg || !z1 || !z2) throw rdf::UsageError("null argument to rdf_steady_state");
        const auto [a, b] = rdf::oregonator_steady_state(cfg->resolved.reaction);
        *z1 = a;
        *z2 = b;
    });
}

int rdf_generate(const rdf_config* cfg, const char* out_dir, char* err, size_t err_len) {
    return guarded(err, err_len, [&] {
        if (!cfg || !out_dir) throw rdf::UsageError("null argument to rdf_generate");
        rdf::generate_dataset(cfg->resolved, out_dir);
    });
}

int rdf_filter(const rdf_config* cfg, const char* dataset_dir, const char* out_dir,
               int n_threads, rdf_filter_summary* summary, char* err, size_t err_len) {
    return guarded(err, err_len, [&] {
        if (!cfg || !dataset_dir || !out_dir)
            throw rdf::UsageError("null argument to rdf_filter");
        const rdf::FilterSummary s = rdf::filter_dataset(
            cfg->resolved, dataset_dir, out_dir, n_threads <= 0 ? 1 : n_threads);
        if (summary) {
            summary->n_steps = s.n_steps;
            summary->final_rmse = s.final_rmse;
            summary->total_log_evidence = s.total_log_evidence;
            summary->degenerate_warnings = s.degenerate_warnings;
            summary->first_degenerate_step = s.first_degenerate_step;
        }
    });
}

int rdf_compare(const char* dir_a, const char* dir_b, const char* out_csv, char* summary_buf,
                size_t summary_len, char* err, size_t err_len) {
    return guarded(err, err_len, [&] {
        if (!dir_a || !dir_b) throw rdf::UsageError("null argument to rdf_compare");
        const rdf::CompareSummary s = rdf::compare_runs(
            dir_a, dir_b, out_csv ? std::filesystem::path(out_csv) : std::filesystem::path());
        if (summary_buf && summary_len > 0) {
            const size_t n =
                s.text.size() < summary_len - 1 ? s.text.size() : summary_len - 1;
            std::memcpy(summary_buf, s.text.data(), n);
            summary_buf[n] = '\0';
        }
    });
}

} // extern "C"
