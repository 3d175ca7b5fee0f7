#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "automaton.hpp"
#include "rng.hpp"

namespace rlmlab {

struct GenerationConfig {
  std::set<int> state_sizes{2, 4, 6, 8, 10, 12, 16};
  std::set<int> alphabet_sizes{2, 4, 6, 8, 10, 12, 16};
  std::set<int> rank_grid{1, 2, 4, 6, 8, 10, 12, 16};
  double logit_std = 2.0;                   // N(0, 4) entries
  double length_filter_threshold = 46.0;    // expected symbols
  std::uint64_t master_seed = 0;
};

std::string generation_config_to_json(const GenerationConfig& c);
GenerationConfig generation_config_from_json(const std::string& text);

// Total next-state table; each cell i.i.d. uniform over states.
Eigen::MatrixXi sample_topology(StreamRng& rng, int num_states, int alphabet_size);

// (|Sigma|+1) x |Q| matrix with i.i.d. Normal(0, logit_std^2) entries.
Eigen::MatrixXd sample_logits(StreamRng& rng, int alphabet_size, int num_states,
                              double logit_std = 2.0);

// Best rank-R approximation in Frobenius norm (SVD truncation). Left singular
// vectors are sign-fixed so the largest-magnitude entry is positive.
Eigen::MatrixXd rank_truncate(const Eigen::MatrixXd& t, int r);

// One automaton per grid rank r <= min(|Q|, |Sigma|+1), sharing the topology;
// member logits are rank_truncate(T, r).
std::vector<Dpfsa> build_family(const Eigen::MatrixXi& topology, const Eigen::MatrixXd& t,
                                const GenerationConfig& config);

// Retains members with expected_length <= threshold.
std::vector<Dpfsa> filter_by_expected_length(const std::vector<Dpfsa>& automata,
                                             double threshold);

struct FamilyMember {
  std::string automaton_id;
  std::string path;
  int declared_rank = 0;
  double expected_length = 0.0;
  double entropy_bits = 0.0;
  bool retained = true;  // false when dropped by the length filter
};

struct FamilyManifest {
  std::string family_id;
  GenerationConfig config;
  int num_states = 0;
  int alphabet_size = 0;
  std::uint64_t family_index = 0;
  std::vector<FamilyMember> members;
};

// Samples one family, writes member automaton files into out_dir, and returns
// the manifest (also written as <family_id>.family.json). Filtered members are
// listed but have no file.
FamilyManifest generate_family_files(const GenerationConfig& config, int num_states,
                                     int alphabet_size, std::uint64_t family_index,
                                     const std::string& out_dir);

std::string family_manifest_to_json(const FamilyManifest& m);
FamilyManifest family_manifest_from_json(const std::string& text);

}  // namespace rlmlab
