/* C interface to the cognitive-decline prediction pipeline.
 *
 * Every function that can fail returns an msnn_status; on failure a
 * human-readable message is kept per thread and readable through
 * msnn_last_error() until the next failing call on that thread.
 *
 * Configs are JSON strings. Unknown presets, malformed JSON, and value
 * range violations come back as MSNN_ERR_CONFIG; unreadable or
 * inconsistent inputs (missing cohort, corrupt checkpoint, mismatched
 * fingerprints) as MSNN_ERR_DATA.
 */

#ifndef MSNN_H
#define MSNN_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum msnn_status {
    MSNN_OK = 0,
    MSNN_ERR_INTERNAL = 1,
    MSNN_ERR_CONFIG = 2,
    MSNN_ERR_DATA = 3
} msnn_status;

typedef struct msnn_cohort msnn_cohort;
typedef struct msnn_experiment msnn_experiment;

const char* msnn_version(void);

/* Message from the most recent failing call on this thread ("" if none). */
const char* msnn_last_error(void);

/* Synthesize a cohort under out_dir: cohort.csv (unlabeled),
 * generator_truth.csv and volumes/<ref>.rvol.
 * config_json keys (all optional): preset ("tiny"|"paper"), n_stable,
 * n_decline, separation, acquisition_dims [x,y,z], seed.
 * NULL config_json means the tiny preset defaults. */
msnn_status msnn_generate(const char* out_dir, const char* config_json);

/* Cluster the MMSE trajectories in out_dir/cohort.csv and write the
 * labels back. Outputs are optional and receive the class sizes. */
msnn_status msnn_label(const char* out_dir, size_t* n_stable, size_t* n_decline);

/* Load a labeled cohort (csv + volume directory) for training. */
msnn_status msnn_cohort_open(const char* dir, msnn_cohort** out);
void msnn_cohort_close(msnn_cohort* cohort);

/* Cross-validated training. config_json keys (all optional): model
 * ("clin"|"multi"|"multim"|"mlp"), preset, epochs, folds, seed, lr,
 * batch_size. Writes split.json and checkpoints/ under out_dir and
 * evaluates the held-out test set at NA fraction 0. Call
 * msnn_experiment_write to emit metrics.csv, roc csv and
 * experiment.json. */
msnn_status msnn_train(const msnn_cohort* cohort, const char* config_json,
                       const char* out_dir, msnn_experiment** out);

/* Rebuild a trained experiment from out_dir (split.json + checkpoints).
 * The cohort must be the one the experiment was trained on. The handle
 * carries no evaluations until msnn_sweep_na runs. */
msnn_status msnn_experiment_open(const char* out_dir, const msnn_cohort* cohort,
                                 msnn_experiment** out);
void msnn_experiment_close(msnn_experiment* experiment);

/* Re-evaluate the frozen ensemble at each missingness fraction in
 * fractions[0..n_fractions), replacing the experiment's evaluations. */
msnn_status msnn_sweep_na(msnn_experiment* experiment, const msnn_cohort* cohort,
                          const double* fractions, size_t n_fractions);

/* Write metrics.csv, one roc_<model>_<na>.csv per evaluation and
 * experiment.json into the experiment's directory. */
msnn_status msnn_experiment_write(const msnn_experiment* experiment);

/* Merge n_dirs experiment directories (same cohort) into out_dir:
 * combined metrics.csv, roc.svg overlay and, when comparing at least
 * two experiments, kw.csv with rank-test statistics over fold AUCs. */
msnn_status msnn_report(const char* const* experiment_dirs, size_t n_dirs,
                        const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* MSNN_H */
