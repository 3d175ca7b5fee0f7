/* rlmlab — C API for the regular-language-model learnability lab.
 *
 * The library generates rank-controlled deterministic probabilistic
 * finite-state automata, computes their exact entropy and expected string
 * length, samples corpora, trains small recurrent LMs, estimates the KL
 * divergence between automaton and model, and fits the complexity
 * regression. All handles are opaque; every call returns a status code and
 * the last failure message is available via rlm_last_error().
 */
#ifndef RLMLAB_H
#define RLMLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define RLMLAB_API __declspec(dllexport)
#else
#define RLMLAB_API __attribute__((visibility("default")))
#endif

typedef enum rlm_status {
  RLM_OK = 0,
  RLM_ERR_INVALID_ARGUMENT = 1,
  RLM_ERR_VALIDATION = 2,
  RLM_ERR_IO = 3,
  RLM_ERR_PARSE = 4,
  RLM_ERR_NUMERIC = 5,
  RLM_ERR_INFEASIBLE_SPLIT = 6,
  RLM_ERR_NON_TERMINATING = 7,
  RLM_ERR_TRAINING_DIVERGED = 8,
  RLM_ERR_INTERNAL = 9
} rlm_status;

RLMLAB_API const char* rlm_version(void);
RLMLAB_API const char* rlm_rng_algorithm(void);
RLMLAB_API const char* rlm_status_name(rlm_status status);

/* Message for the most recent failing call on this thread. */
RLMLAB_API const char* rlm_last_error(void);

/* Frees strings returned through char** out-parameters. */
RLMLAB_API void rlm_string_free(char* s);

typedef struct rlm_dpfsa rlm_dpfsa;
typedef struct rlm_dataset rlm_dataset;
typedef struct rlm_model rlm_model;

/* ---- automata ---- */

RLMLAB_API rlm_status rlm_dpfsa_load(const char* path, rlm_dpfsa** out);
RLMLAB_API rlm_status rlm_dpfsa_save(const rlm_dpfsa* a, const char* path);
RLMLAB_API void rlm_dpfsa_free(rlm_dpfsa* a);

RLMLAB_API int rlm_dpfsa_num_states(const rlm_dpfsa* a);
RLMLAB_API int rlm_dpfsa_alphabet_size(const rlm_dpfsa* a);
RLMLAB_API int rlm_dpfsa_declared_rank(const rlm_dpfsa* a);

/* JSON array of {code, message, state}; empty array means valid. */
RLMLAB_API rlm_status rlm_dpfsa_validate(const rlm_dpfsa* a, char** violations_json);

typedef struct rlm_analysis {
  double entropy_bits;
  double expected_length;
  double spectral_margin;
  int logprob_matrix_rank; /* -1 when undefined for the parameterization */
} rlm_analysis;

RLMLAB_API rlm_status rlm_dpfsa_analyze(const rlm_dpfsa* a, rlm_analysis* out);

/* Expected visit counts per state; buf must hold num_states doubles. */
RLMLAB_API rlm_status rlm_dpfsa_visit_expectations(const rlm_dpfsa* a, double* buf,
                                                   size_t len);

/* ---- generation ----
 *
 * config_json fields (all optional): rank_grid, logit_std,
 * length_filter_threshold, master_seed. Writes the retained member automata
 * plus a family manifest into out_dir and returns the manifest path. */
RLMLAB_API rlm_status rlm_generate_family(const char* config_json, int num_states,
                                          int alphabet_size, uint64_t family_index,
                                          const char* out_dir, char** manifest_path);

/* ---- datasets ---- */

RLMLAB_API rlm_status rlm_dataset_build(const rlm_dpfsa* a, const char* automaton_id,
                                        uint64_t seed, int size, int max_len, int min_test,
                                        rlm_dataset** out);
RLMLAB_API rlm_status rlm_dataset_save(const rlm_dataset* d, const char* corpus_path);
RLMLAB_API rlm_status rlm_dataset_load(const char* corpus_path, rlm_dataset** out);
RLMLAB_API void rlm_dataset_free(rlm_dataset* d);
RLMLAB_API int rlm_dataset_train_size(const rlm_dataset* d);
RLMLAB_API int rlm_dataset_test_size(const rlm_dataset* d);
RLMLAB_API rlm_status rlm_dataset_stats_json(const rlm_dataset* d, char** json);

/* ---- training and scoring ---- */

/* train_config_json fields (all optional): epochs, batch_size, lr,
 * adam_beta1, adam_beta2, adam_eps, seed, grad_clip. loss_trace_json (may be
 * NULL) receives {"epoch_mean_nll_nats": [...]}. */
RLMLAB_API rlm_status rlm_train(const rlm_dataset* d, int hidden_size,
                                const char* train_config_json, rlm_model** out,
                                char** loss_trace_json);
RLMLAB_API rlm_status rlm_model_save(const rlm_model* m, const char* path);
RLMLAB_API rlm_status rlm_model_load(const char* path, rlm_model** out);
RLMLAB_API void rlm_model_free(rlm_model* m);

RLMLAB_API rlm_status rlm_score_model(const rlm_model* m, const rlm_dataset* d,
                                      const char* model_id, const char* automaton_id,
                                      const char* out_scores_path);
/* The automaton scoring its own test strings (the KL(p,p) baseline). */
RLMLAB_API rlm_status rlm_score_automaton(const rlm_dpfsa* a, const rlm_dataset* d,
                                          const char* automaton_id,
                                          const char* out_scores_path);

/* ---- evaluation ---- */

typedef struct rlm_kl_estimate {
  double kl_bits;
  double cross_entropy_bits;
  double entropy_bits;
  double stderr_bits;
  int n_strings;
  int n_excluded_truncated;
} rlm_kl_estimate;

RLMLAB_API rlm_status rlm_kl(const rlm_dpfsa* a, const rlm_dataset* d,
                             const char* scores_path, rlm_kl_estimate* out);

/* ---- regression and plots ---- */

/* Fits the complexity regression on a results TSV. Either output path may be
 * NULL; report_text (may be NULL) receives the aligned table. */
RLMLAB_API rlm_status rlm_regress(const char* results_tsv_path, const char* report_tsv_path,
                                  const char* report_txt_path, char** report_text);

RLMLAB_API rlm_status rlm_export_plot(const char* results_tsv_path, const char* row_column,
                                      const char* col_column, const char* value_column,
                                      const char* out_tsv_path);

/* ---- experiments ---- */

/* Runs the full pipeline described by config_json (see README for the
 * schema) into output_dir; returns the results TSV path. Fails only when
 * every cell fails or on configuration/IO faults. */
RLMLAB_API rlm_status rlm_run_experiment(const char* config_json, const char* output_dir,
                                         char** results_tsv_path);

/* Canonical JSON for the desk-scale default experiment configuration. */
RLMLAB_API rlm_status rlm_default_experiment_config(char** config_json);

#ifdef __cplusplus
}
#endif

#endif /* RLMLAB_H */
