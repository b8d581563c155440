#ifndef RDFILTER_H
#define RDFILTER_H

/* C interface to the reaction-diffusion simulation and block particle
 * filtering library. All entry points are exception-safe: failures are
 * reported through status codes and a caller-supplied error buffer.
 *
 * Status codes double as process exit codes:
 *   RDF_OK             success
 *   RDF_ERR_USAGE      invalid arguments, configuration, or files
 *   RDF_ERR_NUMERICAL  numerical failure during computation
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define RDF_OK 0
#define RDF_ERR_USAGE 1
#define RDF_ERR_NUMERICAL 2

/* Library version as "major.minor.patch". */
const char* rdf_version(void);

/* Opaque run configuration. Created with defaults reproducing the reference
 * experiment; fields are adjusted via dotted keys ("filter.n_particles"). */
typedef struct rdf_config rdf_config;

rdf_config* rdf_config_create(void);
void rdf_config_free(rdf_config* cfg);

/* Loads a JSON config file over the defaults. NULL on failure (err filled). */
rdf_config* rdf_config_load(const char* path, char* err, size_t err_len);

int rdf_config_set(rdf_config* cfg, const char* key, const char* value, char* err,
                   size_t err_len);

/* Serializes the resolved config as JSON into buf (NUL-terminated); returns
 * the required buffer size including the terminator, or 0 on error. */
size_t rdf_config_dump(const rdf_config* cfg, char* buf, size_t buf_len, char* err,
                       size_t err_len);

/* Homogeneous steady state of the configured kinetics. */
int rdf_steady_state(const rdf_config* cfg, double* z1, double* z2, char* err,
                     size_t err_len);

/* Simulates ground truth and observations into out_dir. */
int rdf_generate(const rdf_config* cfg, const char* out_dir, char* err, size_t err_len);

typedef struct rdf_filter_summary {
    int n_steps;
    double final_rmse;
    double total_log_evidence;
    int degenerate_warnings;
    int first_degenerate_step; /* -1 when no block degenerated */
} rdf_filter_summary;

/* Runs the block particle filter over a generated dataset. n_threads <= 0
 * selects single-threaded execution. summary may be NULL. */
int rdf_filter(const rdf_config* cfg, const char* dataset_dir, const char* out_dir,
               int n_threads, rdf_filter_summary* summary, char* err, size_t err_len);

/* Compares two filter output directories; writes a side-by-side CSV when
 * out_csv is non-NULL and places the human-readable verdict in summary_buf. */
int rdf_compare(const char* dir_a, const char* dir_b, const char* out_csv,
                char* summary_buf, size_t summary_len, char* err, size_t err_len);

#ifdef __cplusplus
}
#endif

#endif /* RDFILTER_H */
