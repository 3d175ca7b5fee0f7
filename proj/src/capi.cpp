#include "rlmlab.h"

#include <cstring>
#include <string>

#include <nlohmann/json.hpp>

#include "analysis.hpp"
#include "automaton.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "experiment.hpp"
#include "generation.hpp"
#include "regression.hpp"
#include "rnn.hpp"
#include "rng.hpp"
#include "util.hpp"

using namespace rlmlab;

struct rlm_dpfsa {
  Dpfsa value;
};
struct rlm_dataset {
  Dataset value;
};
struct rlm_model {
  RnnLm value;
};

namespace {

thread_local std::string g_last_error;

rlm_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return RLM_ERR_INVALID_ARGUMENT;
    case ErrorCode::validation: return RLM_ERR_VALIDATION;
    case ErrorCode::io: return RLM_ERR_IO;
    case ErrorCode::parse: return RLM_ERR_PARSE;
    case ErrorCode::numeric: return RLM_ERR_NUMERIC;
    case ErrorCode::infeasible_split: return RLM_ERR_INFEASIBLE_SPLIT;
    case ErrorCode::non_terminating: return RLM_ERR_NON_TERMINATING;
    case ErrorCode::training_diverged: return RLM_ERR_TRAINING_DIVERGED;
    case ErrorCode::internal: return RLM_ERR_INTERNAL;
  }
  return RLM_ERR_INTERNAL;
}

template <typename Fn>
rlm_status guarded(Fn&& fn) {
  try {
    fn();
    return RLM_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RLM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return RLM_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

rlm_status require(bool ok, const char* what) {
  if (ok) return RLM_OK;
  g_last_error = std::string("invalid argument: ") + what;
  return RLM_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* rlm_version(void) { return kToolVersion; }
const char* rlm_rng_algorithm(void) { return kRngAlgorithm; }

const char* rlm_status_name(rlm_status status) {
  switch (status) {
    case RLM_OK: return "ok";
    case RLM_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case RLM_ERR_VALIDATION: return "validation";
    case RLM_ERR_IO: return "io";
    case RLM_ERR_PARSE: return "parse";
    case RLM_ERR_NUMERIC: return "numeric";
    case RLM_ERR_INFEASIBLE_SPLIT: return "infeasible_split";
    case RLM_ERR_NON_TERMINATING: return "non_terminating";
    case RLM_ERR_TRAINING_DIVERGED: return "training_diverged";
    case RLM_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* rlm_last_error(void) { return g_last_error.c_str(); }

void rlm_string_free(char* s) { delete[] s; }

rlm_status rlm_dpfsa_load(const char* path, rlm_dpfsa** out) {
  if (auto st = require(path && out, "path and out must be non-null")) return st;
  return guarded([&] { *out = new rlm_dpfsa{load_dpfsa(path)}; });
}

rlm_status rlm_dpfsa_save(const rlm_dpfsa* a, const char* path) {
  if (auto st = require(a && path, "a and path must be non-null")) return st;
  return guarded([&] { save_dpfsa(a->value, path); });
}

void rlm_dpfsa_free(rlm_dpfsa* a) { delete a; }

int rlm_dpfsa_num_states(const rlm_dpfsa* a) { return a ? a->value.num_states : 0; }
int rlm_dpfsa_alphabet_size(const rlm_dpfsa* a) { return a ? a->value.alphabet.size : 0; }
int rlm_dpfsa_declared_rank(const rlm_dpfsa* a) { return a ? a->value.declared_rank : 0; }

rlm_status rlm_dpfsa_validate(const rlm_dpfsa* a, char** violations_json) {
  if (auto st = require(a && violations_json, "a and violations_json must be non-null"))
    return st;
  return guarded([&] {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : validate(a->value)) {
      nlohmann::json j;
      j["code"] = v.code;
      j["message"] = v.message;
      j["state"] = v.state;
      arr.push_back(std::move(j));
    }
    *violations_json = dup_string(arr.dump());
  });
}

rlm_status rlm_dpfsa_analyze(const rlm_dpfsa* a, rlm_analysis* out) {
  if (auto st = require(a && out, "a and out must be non-null")) return st;
  return guarded([&] {
    AnalysisReport rep = analyze(a->value);
    out->entropy_bits = rep.entropy_bits;
    out->expected_length = rep.expected_length;
    out->spectral_margin = rep.spectral_margin;
    out->logprob_matrix_rank = rep.logprob_matrix_rank;
  });
}

rlm_status rlm_dpfsa_visit_expectations(const rlm_dpfsa* a, double* buf, size_t len) {
  if (auto st = require(a && buf, "a and buf must be non-null")) return st;
  return guarded([&] {
    Eigen::VectorXd v = visit_expectations(a->value);
    if (len < static_cast<size_t>(v.size()))
      fail(ErrorCode::invalid_argument, "buffer too small for visit expectations");
    for (int i = 0; i < v.size(); ++i) buf[i] = v[i];
  });
}

rlm_status rlm_generate_family(const char* config_json, int num_states, int alphabet_size,
                               uint64_t family_index, const char* out_dir,
                               char** manifest_path) {
  if (auto st = require(out_dir, "out_dir must be non-null")) return st;
  return guarded([&] {
    GenerationConfig cfg =
        generation_config_from_json(config_json && *config_json ? config_json : "{}");
    FamilyManifest m =
        generate_family_files(cfg, num_states, alphabet_size, family_index, out_dir);
    if (manifest_path)
      *manifest_path = dup_string(
          (std::string(out_dir) + "/" + m.family_id + ".family.json"));
  });
}

rlm_status rlm_dataset_build(const rlm_dpfsa* a, const char* automaton_id, uint64_t seed,
                             int size, int max_len, int min_test, rlm_dataset** out) {
  if (auto st = require(a && out, "a and out must be non-null")) return st;
  return guarded([&] {
    *out = new rlm_dataset{build_dataset(a->value, seed, size, max_len, min_test,
                                         automaton_id ? automaton_id : "")};
  });
}

rlm_status rlm_dataset_save(const rlm_dataset* d, const char* corpus_path) {
  if (auto st = require(d && corpus_path, "d and corpus_path must be non-null")) return st;
  return guarded([&] { save_dataset(d->value, corpus_path); });
}

rlm_status rlm_dataset_load(const char* corpus_path, rlm_dataset** out) {
  if (auto st = require(corpus_path && out, "corpus_path and out must be non-null"))
    return st;
  return guarded([&] { *out = new rlm_dataset{load_dataset(corpus_path)}; });
}

void rlm_dataset_free(rlm_dataset* d) { delete d; }

int rlm_dataset_train_size(const rlm_dataset* d) {
  return d ? static_cast<int>(d->value.train.size()) : 0;
}

int rlm_dataset_test_size(const rlm_dataset* d) {
  return d ? static_cast<int>(d->value.test.size()) : 0;
}

rlm_status rlm_dataset_stats_json(const rlm_dataset* d, char** json) {
  if (auto st = require(d && json, "d and json must be non-null")) return st;
  return guarded([&] { *json = dup_string(dataset_stats_to_json(d->value.stats)); });
}

rlm_status rlm_train(const rlm_dataset* d, int hidden_size, const char* train_config_json,
                     rlm_model** out, char** loss_trace_json) {
  if (auto st = require(d && out, "d and out must be non-null")) return st;
  return guarded([&] {
    TrainConfig cfg = train_config_from_json(
        train_config_json && *train_config_json ? train_config_json : "{}");
    TrainResult res = train(d->value, hidden_size, cfg);
    *out = new rlm_model{std::move(res.model)};
    if (loss_trace_json) {
      nlohmann::json j;
      j["epoch_mean_nll_nats"] = res.epoch_mean_nll;
      *loss_trace_json = dup_string(j.dump());
    }
  });
}

rlm_status rlm_model_save(const rlm_model* m, const char* path) {
  if (auto st = require(m && path, "m and path must be non-null")) return st;
  return guarded([&] { save_model(m->value, path); });
}

rlm_status rlm_model_load(const char* path, rlm_model** out) {
  if (auto st = require(path && out, "path and out must be non-null")) return st;
  return guarded([&] { *out = new rlm_model{load_model(path)}; });
}

void rlm_model_free(rlm_model* m) { delete m; }

rlm_status rlm_score_model(const rlm_model* m, const rlm_dataset* d, const char* model_id,
                           const char* automaton_id, const char* out_scores_path) {
  if (auto st = require(m && d && out_scores_path, "m, d and out_scores_path must be non-null"))
    return st;
  return guarded([&] {
    ScoreFile sf;
    sf.model_id = model_id ? model_id : "model";
    sf.automaton_id = automaton_id ? automaton_id : d->value.source_automaton_id;
    for (auto& s : score(m->value, d->value.test)) {
      ScoreRecord rec;
      rec.string_index = s.string_index;
      rec.total_logprob_nats = s.total_logprob_nats;
      rec.per_token_logprobs_nats = std::move(s.per_token_logprobs_nats);
      sf.records.push_back(std::move(rec));
    }
    write_scores(sf, out_scores_path);
  });
}

rlm_status rlm_score_automaton(const rlm_dpfsa* a, const rlm_dataset* d,
                               const char* automaton_id, const char* out_scores_path) {
  if (auto st = require(a && d && out_scores_path, "a, d and out_scores_path must be non-null"))
    return st;
  return guarded([&] {
    std::string id = automaton_id ? automaton_id : d->value.source_automaton_id;
    write_scores(score_automaton(a->value, d->value, id), out_scores_path);
  });
}

rlm_status rlm_kl(const rlm_dpfsa* a, const rlm_dataset* d, const char* scores_path,
                  rlm_kl_estimate* out) {
  if (auto st = require(a && d && scores_path && out, "all arguments must be non-null"))
    return st;
  return guarded([&] {
    ScoreFile sf = ingest_external_scores(scores_path);
    KlEstimate kl = kl_estimate(a->value, sf, d->value);
    out->kl_bits = kl.kl_bits;
    out->cross_entropy_bits = kl.cross_entropy_bits;
    out->entropy_bits = kl.entropy_bits;
    out->stderr_bits = kl.stderr_bits;
    out->n_strings = kl.n_strings;
    out->n_excluded_truncated = kl.n_excluded_truncated;
  });
}

rlm_status rlm_regress(const char* results_tsv_path, const char* report_tsv_path,
                       const char* report_txt_path, char** report_text) {
  if (auto st = require(results_tsv_path, "results_tsv_path must be non-null")) return st;
  return guarded([&] {
    auto rows = results_from_tsv(read_file(results_tsv_path));
    DesignMatrix dm = build_design_matrix(rows);
    RegressionFit fit = ols_fit(dm);
    RegressionReport rep = regression_report(fit, dm);
    if (report_tsv_path) write_file(report_tsv_path, rep.tsv);
    if (report_txt_path) write_file(report_txt_path, rep.text_table);
    if (report_text) *report_text = dup_string(rep.text_table);
  });
}

rlm_status rlm_export_plot(const char* results_tsv_path, const char* row_column,
                           const char* col_column, const char* value_column,
                           const char* out_tsv_path) {
  if (auto st = require(results_tsv_path && row_column && col_column && value_column &&
                            out_tsv_path,
                        "all arguments must be non-null"))
    return st;
  return guarded([&] {
    std::string grid =
        export_plot(read_file(results_tsv_path), row_column, col_column, value_column);
    write_file(out_tsv_path, grid);
  });
}

rlm_status rlm_run_experiment(const char* config_json, const char* output_dir,
                              char** results_tsv_path) {
  if (auto st = require(output_dir, "output_dir must be non-null")) return st;
  return guarded([&] {
    ExperimentConfig cfg = config_json && *config_json
                               ? experiment_config_from_json(config_json)
                               : ExperimentConfig::desk_default();
    cfg.output_dir = output_dir;
    ExperimentResult res = run_experiment(cfg);
    if (res.cells_ok == 0 && res.cells_failed > 0) {
      std::string first_error = "unknown";
      for (const auto& cell : res.manifest.cells) {
        if (cell.status == "failed") {
          first_error = cell.error;
          break;
        }
      }
      fail(ErrorCode::internal, "all " + std::to_string(res.cells_failed) +
                                    " cells failed; first error: " + first_error);
    }
    if (results_tsv_path) *results_tsv_path = dup_string(res.results_tsv_path);
  });
}

rlm_status rlm_default_experiment_config(char** config_json) {
  if (auto st = require(config_json, "config_json must be non-null")) return st;
  return guarded([&] {
    *config_json = dup_string(experiment_config_to_json(ExperimentConfig::desk_default()));
  });
}

}  // extern "C"
