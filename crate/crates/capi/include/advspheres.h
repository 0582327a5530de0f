/* C interface to the advspheres benchmark library. */

#ifndef ADVSPHERES_H
#define ADVSPHERES_H

/* Generated from the advspheres-capi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by fallible functions. The non-zero values mirror
// the CLI exit codes where a counterpart exists (2 usage, 3 data,
// 4 numerical failure).
typedef enum AdvStatus {
  // Success.
  ADV_OK = 0,
  // A required pointer argument was null.
  ADV_NULL_ARGUMENT = 1,
  // Invalid configuration key, value, or method name.
  ADV_USAGE_ERROR = 2,
  // Missing or malformed data (files, CSV, dimension mismatches).
  ADV_DATA_ERROR = 3,
  // Numerical failure (optimization, sampling, or attack divergence).
  ADV_NUMERIC_ERROR = 4,
  // A provided buffer was too small for the requested copy.
  ADV_BUFFER_TOO_SMALL = 5,
  // A string argument was not valid UTF-8.
  ADV_INVALID_UTF8 = 6,
  // The library panicked; state may be inconsistent.
  ADV_PANIC = 7,
} AdvStatus;

// Result of one projected-gradient attack (one source sphere).
typedef struct AdvAttack AdvAttack;

// Resolved run configuration. Create with [`adv_config_new`], adjust
// with [`adv_config_set`], release with [`adv_config_free`].
typedef struct AdvConfig AdvConfig;

// Generated sphere dataset: train and validation splits, already mapped
// to normalized feature space, plus the fitted normalizer.
typedef struct AdvDataset AdvDataset;

// Fitted weight ensemble plus the normalizer it was trained under (so
// attacks can chain gradients back to input space).
typedef struct AdvEnsemble AdvEnsemble;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version of the library as a static, NUL-terminated string.
const char *adv_version(void);

// Message describing the most recent failure on the calling thread.
// The pointer stays valid until the next library call on this thread.
const char *adv_last_error_message(void);

// Create a configuration from a named profile (`"paper"` or `"ci"`).
// Returns null and sets the error message when the profile is unknown.
struct AdvConfig *adv_config_new(const char *profile);

// Set one configuration key. Keys and values use the same flat
// namespace as the CLI's `--set KEY=VALUE` (e.g. `"dim"`, `"seed"`,
// `"attack_restarts"`); the value is parsed first as a typed literal and
// then as a string. The updated configuration is re-validated, so an
// out-of-range value is rejected immediately.
enum AdvStatus adv_config_set(struct AdvConfig *cfg, const char *key, const char *value);

// Stable fingerprint of the statistical configuration (ignores output
// paths and thread counts). Matches the `config_fingerprint` recorded in
// CLI manifests.
uint64_t adv_config_fingerprint(const struct AdvConfig *cfg);

// Release a configuration handle. Null is ignored.
void adv_config_free(struct AdvConfig *cfg);

// Sample both splits from the configured spheres and fit the feature
// normalizer on the training split, exactly as the benchmark does.
struct AdvDataset *adv_dataset_generate(const struct AdvConfig *cfg);

// Number of training points (0 for a null handle).
size_t adv_dataset_train_len(const struct AdvDataset *ds);

// Number of validation points (0 for a null handle).
size_t adv_dataset_val_len(const struct AdvDataset *ds);

// Input-space dimension D (0 for a null handle).
size_t adv_dataset_dim(const struct AdvDataset *ds);

// Release a dataset handle. Null is ignored.
void adv_dataset_free(struct AdvDataset *ds);

// Fit one inference method on the dataset's training split. `method` is
// a CLI method tag: `ml`, `map`, `bootstrap`, `mcmc`, `laplace`, `svi`,
// `svi_hier`, or `mcmc_mean_hier`. Seeds derive from the configured
// master seed exactly as in `advspheres infer`, so the resulting
// ensemble matches the CLI's saved ensemble bit for bit.
struct AdvEnsemble *adv_fit(const struct AdvConfig *cfg,
                            const struct AdvDataset *ds,
                            const char *method);

// Number of ensemble members (0 for a null handle).
size_t adv_ensemble_members(const struct AdvEnsemble *e);

// Weight-space dimension (0 for a null handle).
size_t adv_ensemble_dim(const struct AdvEnsemble *e);

// Copy the ensemble's weights into `out`, row-major
// (members × dimension). `len` is the capacity of `out` in doubles and
// must be at least members × dimension.
enum AdvStatus adv_ensemble_weights(const struct AdvEnsemble *e, double *out, size_t len);

// Save the ensemble as `{stem}.csv` + `{stem}.meta.toml`, the format the
// CLI's `infer` command writes and its `attack` command loads.
enum AdvStatus adv_ensemble_save(const struct AdvEnsemble *e, const char *stem);

// Average predictive confidence in the true label over the dataset's
// validation split, written to `out`.
enum AdvStatus adv_avg_confidence(const struct AdvEnsemble *e,
                                  const struct AdvDataset *ds,
                                  double *out);

// Release an ensemble handle. Null is ignored.
void adv_ensemble_free(struct AdvEnsemble *e);

// Attack the ensemble from the sphere of `source_label` (0 inner,
// 1 outer), maximizing the probability of the opposite label. Uses the
// configured attack parameters and the same seed derivation as
// `advspheres attack`, so results match the CLI run for run.
struct AdvAttack *adv_attack_run(const struct AdvConfig *cfg,
                                 const struct AdvEnsemble *e,
                                 uint8_t source_label);

// Best ensemble probability of the target label across restarts
// (NaN for a null handle).
double adv_attack_best_prob(const struct AdvAttack *a);

// Input-space dimension of the attack point (0 for a null handle).
size_t adv_attack_dim(const struct AdvAttack *a);

// Copy the best adversarial point (input-space coordinates, on the
// source sphere) into `out`. `len` is the capacity of `out` in doubles.
enum AdvStatus adv_attack_point(const struct AdvAttack *a, double *out, size_t len);

// Number of restarts the attack ran (0 for a null handle).
size_t adv_attack_restarts(const struct AdvAttack *a);

// Number of restarts that aborted on numerical failure (such restarts
// are recorded but never contribute a best point).
size_t adv_attack_aborted(const struct AdvAttack *a);

// Release an attack handle. Null is ignored.
void adv_attack_free(struct AdvAttack *a);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADVSPHERES_H */
