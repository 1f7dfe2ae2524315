#ifndef MCONF_C_H
#define MCONF_C_H

#ifdef __cplusplus
extern "C" {
#endif

/* Error codes. Functions return MCONF_OK on success; on failure the return
 * value classifies the error and mconf_last_error() describes it. The codes
 * match the CLI exit codes. */
#define MCONF_OK 0
#define MCONF_ERR_CONFIG 1
#define MCONF_ERR_DATA 2
#define MCONF_ERR_NUMERIC 3

/* Message for the most recent failure on this thread; empty string after a
 * success. The pointer stays valid until the next call on the same thread. */
const char* mconf_last_error(void);

/* ---- Coarse-grained, JSON-configured entry points ---------------------- */

/* Run a benchmark experiment described by a JSON config document and write
 * the report to out_path. format is "json" or "csv". */
int mconf_run_experiment(const char* config_json, const char* format,
                         const char* out_path);

/* Generate a synthetic dataset (JSON spec: n, p, q, informative_frac,
 * effective_rank_frac, noise_sd; all optional) and save it as CSV. */
int mconf_synth_csv(const char* spec_json, unsigned long long seed,
                    const char* out_path);

/* Evaluate conformal p-values over a response grid for one held-out row and
 * write a CSV (one row per grid point: coordinates, p-value as an exact
 * ratio, region membership). The config document carries dataset, predictor,
 * measure, alpha, grid_points, and optionally held_out / lower / upper. */
int mconf_grid_export(const char* config_json, const char* out_path);

/* Build a prediction region for one held-out row and export it. For the
 * root-finding methods: boundary points to csv_path and the fitted convex
 * shape to json_path. For the exact union methods: a membership grid to
 * csv_path and a member summary to json_path. Either path may be NULL or
 * empty to skip that artifact. */
int mconf_region_export(const char* config_json, const char* csv_path,
                        const char* json_path);

/* ---- Opaque handles for in-process use --------------------------------- */

typedef struct mconf_dataset mconf_dataset;

/* Row-major arrays: x is n*p covariates, y is n*q responses. NULL on error
 * (inspect mconf_last_error on the same thread). */
mconf_dataset* mconf_dataset_create(const double* x, const double* y, int n, int p,
                                    int q);
void mconf_dataset_free(mconf_dataset* data);
int mconf_dataset_dims(const mconf_dataset* data, int* n, int* p, int* q);

/* Closed-form conformal state for a single query point: one hat-matrix
 * construction answers any number of candidate-response queries.
 * predictor_json example: {"id":"ridge","lambda":[1.0]}; measure is "l1" or
 * "wnorm" (W estimated from training residuals). */
typedef struct mconf_exact mconf_exact;

mconf_exact* mconf_exact_create(const mconf_dataset* data, const double* x_new,
                                const char* predictor_json, const char* measure);
void mconf_exact_free(mconf_exact* state);

/* Conformal p-value of candidate response z (length q), as an exact ratio. */
int mconf_exact_pvalue(const mconf_exact* state, const double* z, long long* num,
                       long long* den);

/* Level-alpha region membership of candidate z; *member is set to 0 or 1. */
int mconf_exact_member(const mconf_exact* state, const double* z, double alpha,
                       int* member);

#ifdef __cplusplus
}
#endif

#endif /* MCONF_C_H */
