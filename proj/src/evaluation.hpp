#pragma once

#include <optional>
#include <string>
#include <vector>

#include "automaton.hpp"
#include "dataset.hpp"

namespace rlmlab {

// One scored string. Indices refer to positions in the dataset's test split.
// Optional full per-step log-distribution rows allow normalization checks on
// ingested files.
struct ScoreRecord {
  int string_index = 0;
  double total_logprob_nats = 0.0;
  std::vector<double> per_token_logprobs_nats;
  std::optional<std::vector<std::vector<double>>> per_step_logprob_vectors_nats;
};

struct ScoreFile {
  std::string model_id;
  std::string automaton_id;
  std::vector<ScoreRecord> records;  // units always nats in memory
};

struct CrossEntropyEstimate {
  double mean_bits = 0.0;
  double stderr_bits = 0.0;
  int n_strings = 0;
  int n_excluded_truncated = 0;
};

struct KlEstimate {
  double kl_bits = 0.0;
  double cross_entropy_bits = 0.0;
  double entropy_bits = 0.0;
  double stderr_bits = 0.0;
  int n_strings = 0;
  int n_excluded_truncated = 0;
  bool low_confidence() const { return n_strings < 2; }
};

// Score file JSONL: a header object {"model_id","automaton_id","units"}
// followed by one record per line. "units" may be "nats" or "bits"; values
// are converted to nats on ingest.
void write_scores(const ScoreFile& scores, const std::string& path);
ScoreFile ingest_external_scores(const std::string& path);

// The automaton scoring its own samples (per-token log-probabilities along
// the unique path; truncated prefixes carry no EOS term).
ScoreFile score_automaton(const Dpfsa& a, const Dataset& ds, const std::string& automaton_id);

// Monte-Carlo cross-entropy over the untruncated test strings; requires every
// such string scored exactly once (multiplicities respected).
CrossEntropyEstimate empirical_cross_entropy(const ScoreFile& scores, const Dataset& ds);

KlEstimate kl_estimate(const Dpfsa& a, const ScoreFile& scores, const Dataset& ds);

std::string kl_estimate_to_json(const KlEstimate& e);

}  // namespace rlmlab
