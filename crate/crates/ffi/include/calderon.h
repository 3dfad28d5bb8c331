/* C ABI of the calderon inverse-problem laboratory.
 *
 * Conventions:
 *   - every function returns a CalderonStatus code;
 *   - outputs go through caller-supplied pointers;
 *   - handles are opaque and must be released with their _free function;
 *   - calderon_last_error_message() describes the most recent failure on the
 *     calling thread (NULL when the last call succeeded).
 *
 * This header is maintained by hand and kept in sync with src/lib.rs by the
 * crate's header_sync test.
 */

#ifndef CALDERON_H
#define CALDERON_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum CalderonStatus {
  CALDERON_OK = 0,
  CALDERON_NULL_POINTER = 1,
  CALDERON_INVALID_UTF8 = 2,
  CALDERON_CONFIG_ERROR = 3,
  CALDERON_NUMERICAL_ERROR = 4,
  CALDERON_IO_ERROR = 5,
  CALDERON_PANIC = 6,
} CalderonStatus;

/* Opaque experiment handle (a validated TOML configuration). */
typedef struct CalderonLab CalderonLab;

/* Most recent error on this thread, or NULL. Valid until the next failure. */
const char *calderon_last_error_message(void);

/* Static version string. */
const char *calderon_version(void);

/* Parse a TOML experiment configuration. On success *out_lab owns the handle
 * and must be released with calderon_lab_free. */
CalderonStatus calderon_lab_new(const char *toml_text, CalderonLab **out_lab);

/* Release a handle. NULL is a no-op. */
void calderon_lab_free(CalderonLab *lab);

/* Number of interior grid nodes of the configured experiment. */
CalderonStatus calderon_grid_size(const CalderonLab *lab, size_t *out_n);

/* Solve the Dirichlet problem (Delta + lambda - q0)u = 0 with the datum
 * exp(x1) on the boundary; out_field must hold calderon_grid_size doubles,
 * out_residual receives the relative algebraic residual. */
CalderonStatus calderon_forward_dirichlet(const CalderonLab *lab,
                                          double lambda,
                                          double *out_field,
                                          double *out_residual);

/* Run the stability sweep; writes records.csv / fits.json / manifest.json
 * into out_dir (or the config's output_dir when out_dir is NULL). */
CalderonStatus calderon_sweep_run(const CalderonLab *lab,
                                  const char *out_dir,
                                  size_t *out_n_records);

/* Oracle-mode low-pass reconstruction at the config's first lambda and the
 * given tau with s = tau^(2/(n+2)); returns the relative H^{-1} error. */
CalderonStatus calderon_reconstruct_rel_error(const CalderonLab *lab,
                                              double tau,
                                              double *out_rel_error);

/* First k eigenvalues sum_j k_j^2/mu_j^2 of the box prod (0, mu_j pi);
 * out_values must hold k doubles; *out_all_simple is 1 when every
 * multiplicity is one. */
CalderonStatus calderon_gap_eigenvalues(const double *mu,
                                        size_t mu_len,
                                        size_t k,
                                        double *out_values,
                                        int *out_all_simple);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CALDERON_H */
