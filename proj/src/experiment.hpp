#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "evaluation.hpp"
#include "generation.hpp"
#include "regression.hpp"
#include "rnn.hpp"

namespace rlmlab {

inline constexpr const char* kToolVersion = "0.1.0";

struct DatasetConfig {
  int size = 20000;
  int max_len = 256;
  int min_test = 2000;
};

struct ExperimentConfig {
  GenerationConfig generation;
  DatasetConfig dataset;
  TrainConfig train;
  std::set<int> d_grid{2, 4, 6, 8, 10, 12, 16};
  int replicates = 1;
  std::string output_dir;
  int parallelism = 1;

  // Small grid sized for a single workstation: 2 state sizes x 2 alphabet
  // sizes x auto ranks x 3 hidden sizes x 3 replicates.
  static ExperimentConfig desk_default();
};

std::string experiment_config_to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const std::string& text);

struct MemberRecord {
  std::string family_id;
  std::string automaton_id;
  int num_states = 0;
  int alphabet_size = 0;
  std::uint64_t replicate = 0;
  int rank = 0;
  double expected_length = 0.0;
  double entropy_bits = 0.0;
  std::string automaton_path;
  std::string automaton_hash;
  std::string dataset_path;
  std::string dataset_hash;
  std::string status;  // "ok" | "filtered" | "failed"
  std::string error;
};

struct CellRecord {
  std::string automaton_id;
  std::string model_id;
  int d = 0;
  std::string model_path;
  std::string model_hash;
  std::string scores_path;
  std::string scores_hash;
  KlEstimate kl;
  std::string status;  // "ok" | "failed"
  std::string error;
  double wall_ms = 0.0;
};

struct Manifest {
  std::string tool_version;
  std::string rng_algorithm;
  std::string config_hash;
  ExperimentConfig config;
  std::vector<MemberRecord> members;
  std::vector<CellRecord> cells;
  double total_wall_ms = 0.0;
};

std::string manifest_to_json(const Manifest& m);

struct ExperimentResult {
  Manifest manifest;
  std::string results_tsv_path;
  std::string manifest_path;
  int cells_ok = 0;
  int cells_failed = 0;
};

// Full pipeline: generate families, build datasets, train one model per
// (member, D), score, estimate KL, and write results.tsv plus manifest.json
// under config.output_dir. Existing outputs with matching content are reused,
// so deleting one cell's files recomputes exactly that cell.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Mean of `value_column` grouped by (row_column, col_column); a mean matrix
// followed by a count matrix, empty cells as NA.
std::string export_plot(const std::string& results_tsv_text, const std::string& row_column,
                        const std::string& col_column, const std::string& value_column);

}  // namespace rlmlab
