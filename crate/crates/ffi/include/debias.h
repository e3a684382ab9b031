#ifndef DEBIAS_FFI_H
#define DEBIAS_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Appearance group selector.
 */
typedef enum DebiasGroup {
  DEBIAS_LIGHTER = 0,
  DEBIAS_DARKER = 1,
} DebiasGroup;

/**
 * Result code of every call.
 */
typedef enum DebiasStatus {
  DEBIAS_OK = 0,
  DEBIAS_ERR_NULL_POINTER = 1,
  DEBIAS_ERR_UTF8 = 2,
  DEBIAS_ERR_INVALID_ARGUMENT = 3,
  DEBIAS_ERR_CONFIG = 4,
  DEBIAS_ERR_MISSING_DEPENDENCY = 5,
  DEBIAS_ERR_INTEGRITY = 6,
  DEBIAS_ERR_SCHEMA = 7,
  DEBIAS_ERR_NUMERIC = 8,
  DEBIAS_ERR_UNDEFINED = 9,
  DEBIAS_ERR_INSUFFICIENT_STARTERS = 10,
  DEBIAS_ERR_IO = 11,
  DEBIAS_ERR_PANIC = 12,
} DebiasStatus;

/**
 * Opaque run configuration.
 */
typedef struct DebiasConfig DebiasConfig;

/**
 * Opaque trained classifier.
 */
typedef struct DebiasModel DebiasModel;

/**
 * Opaque fairness report.
 */
typedef struct DebiasReport DebiasReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *debias_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 */
void debias_string_free(char *s);

/**
 * 95% normal-approximation half-width of a proportion `p` over `n` trials.
 */
enum DebiasStatus debias_binomial_ci(double p, size_t n, double *half_width);

/**
 * Welch t statistic and two-sided p-value for two accuracies.
 */
enum DebiasStatus debias_welch_t(double p1,
                                 size_t n1,
                                 double p2,
                                 size_t n2,
                                 double *t,
                                 double *p_value);

/**
 * Default configuration.
 */
enum DebiasStatus debias_config_default(struct DebiasConfig **config);

/**
 * Parses the flat `key = value` config format.
 */
enum DebiasStatus debias_config_parse(const char *text_utf8, struct DebiasConfig **config);

/**
 * Sets one config key. The config is left unchanged when validation fails.
 */
enum DebiasStatus debias_config_set(struct DebiasConfig *config,
                                    const char *key,
                                    const char *value);

/**
 * The config rendered as `key = value` lines. Free with [`debias_string_free`].
 */
enum DebiasStatus debias_config_to_text(const struct DebiasConfig *config, char **text_out);

void debias_config_free(struct DebiasConfig *config);

/**
 * Runs comma-separated `stages` (or `all`) in `out_dir`.
 */
enum DebiasStatus debias_run(const struct DebiasConfig *config,
                             const char *out_dir,
                             const char *stages);

/**
 * Builds a fairness report from prediction CSV text (`id,group,actual,score,predicted`).
 */
enum DebiasStatus debias_report_from_csv(const char *csv_utf8,
                                         const char *system,
                                         struct DebiasReport **report);

/**
 * Report as JSON. Free with [`debias_string_free`].
 */
enum DebiasStatus debias_report_to_json(const struct DebiasReport *report, char **json);

/**
 * Signed accuracy difference, lighter minus darker, as a fraction.
 */
enum DebiasStatus debias_report_delta(const struct DebiasReport *report, double *delta);

enum DebiasStatus debias_report_accuracy(const struct DebiasReport *report,
                                         enum DebiasGroup group,
                                         double *value);

enum DebiasStatus debias_report_sensitivity(const struct DebiasReport *report,
                                            enum DebiasGroup group,
                                            double *value);

enum DebiasStatus debias_report_auc(const struct DebiasReport *report,
                                    enum DebiasGroup group,
                                    double *value);

void debias_report_free(struct DebiasReport *report);

/**
 * Loads a classifier checkpoint written by a run.
 */
enum DebiasStatus debias_model_load(const char *path, struct DebiasModel **model);

/**
 * Number of inputs (pixels) the model expects.
 */
enum DebiasStatus debias_model_input_dim(const struct DebiasModel *model, size_t *dim);

/**
 * Class-1 probability for one flattened input of `len` values.
 */
enum DebiasStatus debias_model_predict(const struct DebiasModel *model,
                                       const double *input,
                                       size_t len,
                                       double *probability);

void debias_model_free(struct DebiasModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEBIAS_FFI_H */
