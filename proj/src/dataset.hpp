#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "automaton.hpp"
#include "rng.hpp"

namespace rlmlab {

struct DatasetStats {
  double mean_length = 0.0;
  int num_truncated = 0;
  std::vector<int> histogram;  // counts per length bin
  int histogram_bin_width = 8;
};

// Sampled corpus with disjoint train/test splits. No symbol sequence appears
// in both splits; multiplicities are preserved within each split.
struct Dataset {
  std::vector<StringRecord> train;
  std::vector<StringRecord> test;
  std::string source_automaton_id;
  std::uint64_t seed = 0;
  int max_len = 256;
  int alphabet_size = 0;  // from the source automaton; 0 = infer from symbols
  DatasetStats stats;
};

// One ancestral sample; generation stops at EOS or once max_len symbols have
// been emitted and the next draw is not EOS (truncated = true).
StringRecord sample_string(const Dpfsa& a, StreamRng& rng, int max_len);

Dataset build_dataset(const Dpfsa& a, std::uint64_t seed, int size = 20000,
                      int max_len = 256, int min_test = 2000,
                      const std::string& automaton_id = "");

DatasetStats dataset_stats(const Dataset& ds);

// Corpus JSONL: one {"split","ids","truncated"} record per string. Seed and
// stats live in a sidecar <path>.meta.json.
void save_dataset(const Dataset& ds, const std::string& corpus_path);
Dataset load_dataset(const std::string& corpus_path);

std::string dataset_stats_to_json(const DatasetStats& s);

}  // namespace rlmlab
