/* C interface to the slimfl core: experiment configs, runs, metrics and the
 * closed-form link operations. Handles are opaque; every call returns a
 * status code and the last failure message is kept per thread. */
#ifndef SLIMFL_H
#define SLIMFL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SLIMFL_API __declspec(dllexport)
#else
#define SLIMFL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum slimfl_status {
    SLIMFL_OK = 0,
    SLIMFL_ERR_CONFIG = 1,
    SLIMFL_ERR_RUNTIME = 2,
    SLIMFL_ERR_INVALID_ARGUMENT = 3,
    SLIMFL_ERR_IO = 4
} slimfl_status;

/* Message of the most recent failure on this thread; never NULL. */
SLIMFL_API const char* slimfl_last_error(void);

/* ------------------------------------------------------------------ */
/* Configuration                                                       */

typedef struct slimfl_config slimfl_config;

SLIMFL_API slimfl_status slimfl_config_load(const char* path, slimfl_config** out);
SLIMFL_API slimfl_status slimfl_config_parse(const char* text, slimfl_config** out);
/* Key/value assignment using the config-file key names, e.g. ("seed", "7"). */
SLIMFL_API slimfl_status slimfl_config_set(slimfl_config* cfg, const char* key,
                                           const char* value);
SLIMFL_API void slimfl_config_free(slimfl_config* cfg);

/* ------------------------------------------------------------------ */
/* Experiments                                                         */

typedef struct slimfl_metrics slimfl_metrics;

/* Column indices of the metrics table. */
typedef enum slimfl_metrics_column {
    SLIMFL_COL_ROUND = 0,
    SLIMFL_COL_LOSS_HALF = 1,
    SLIMFL_COL_LOSS_FULL = 2,
    SLIMFL_COL_TOP1_HALF = 3,
    SLIMFL_COL_TOP1_FULL = 4,
    SLIMFL_COL_N_LEFT = 5,
    SLIMFL_COL_N_RIGHT = 6,
    SLIMFL_COL_DECODED_BITS_HALF = 7,
    SLIMFL_COL_DECODED_BITS_FULL = 8,
    SLIMFL_COL_DROPPED_BITS = 9,
    SLIMFL_COL_COMM_MW = 10,
    SLIMFL_COL_FLOPS = 11
} slimfl_metrics_column;

SLIMFL_API slimfl_status slimfl_run(const slimfl_config* cfg, slimfl_metrics** out);
SLIMFL_API size_t slimfl_metrics_rows(const slimfl_metrics* metrics);
SLIMFL_API slimfl_status slimfl_metrics_cell(const slimfl_metrics* metrics, size_t row,
                                             slimfl_metrics_column column, double* out);
SLIMFL_API void slimfl_metrics_free(slimfl_metrics* metrics);

/* Executes a subcommand ("run", "sweep-lambda", "bound", "counterexample",
 * "partition-report") and writes its artifacts under out_dir. */
SLIMFL_API slimfl_status slimfl_execute(const slimfl_config* cfg, const char* subcommand,
                                        const char* out_dir);

/* ------------------------------------------------------------------ */
/* Link model (all values 64-bit floating point; powers in milliwatts) */

SLIMFL_API slimfl_status slimfl_dbm_to_milliwatts(double dbm, double* out);
SLIMFL_API slimfl_status slimfl_effective_code_rate(double u_bps, double bandwidth_hz,
                                                    double* out);
SLIMFL_API slimfl_status slimfl_link_constant(double sigma2_mw, double distance_m, double beta,
                                              double* out);
SLIMFL_API slimfl_status slimfl_split_power(double total_power_mw, double lambda, double* p1_mw,
                                            double* p2_mw);
/* out[0..3] = tau1, tau2, p1, p2 (tau2 may be +inf). */
SLIMFL_API slimfl_status slimfl_decode_profile(double p1_mw, double p2_mw, double u_prime,
                                               double c, double out[4]);
SLIMFL_API slimfl_status slimfl_diversity_cost(double lambda, double total_power_mw,
                                               double u_prime, double c, double* out);

typedef enum slimfl_optimize_method {
    SLIMFL_OPTIMIZE_GRID = 0,
    SLIMFL_OPTIMIZE_GOLDEN = 1,
    SLIMFL_OPTIMIZE_TAYLOR = 2
} slimfl_optimize_method;

SLIMFL_API slimfl_status slimfl_optimize_lambda(double total_power_mw, double u_prime, double c,
                                                slimfl_optimize_method method, double* out);
SLIMFL_API slimfl_status slimfl_calibrated_u_prime(double total_power_mw, double c,
                                                   double target_lambda, double* out);

/* ------------------------------------------------------------------ */
/* Convergence-bound arithmetic                                        */

SLIMFL_API slimfl_status slimfl_gradient_variance_bound(double delta, double p1, double p2,
                                                        double w1, double w2, double* out);
SLIMFL_API slimfl_status slimfl_convergence_bound(uint64_t t, double smoothness_L,
                                                  double strong_convexity_mu, double delta,
                                                  double p1, double p2, double w1, double w2,
                                                  double delta1, double* out);

#ifdef __cplusplus
}
#endif

#endif /* SLIMFL_H */
