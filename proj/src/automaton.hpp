#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace rlmlab {

// Default tolerances used by validation and rank computations.
inline constexpr double kSoftmaxNormTol = 1e-12;
inline constexpr double kExplicitNormTol = 1e-9;
inline constexpr double kRankTol = 1e-10;

// Symbols are 0..size-1; the end-of-sequence outcome uses the reserved id
// `size` and is not part of the alphabet proper.
struct Alphabet {
  int size = 1;
  int eos_id() const { return size; }
  int num_outcomes() const { return size + 1; }
};

enum class ParamMode {
  softmax_logits,   // columns of `logits` are softmax-normalized
  explicit_probs,   // columns of `logits` hold log-probabilities, -inf allowed
};

const char* param_mode_name(ParamMode mode);
ParamMode param_mode_from_name(const std::string& name);

struct StringRecord {
  std::vector<int> symbols;  // EOS excluded
  bool truncated = false;
  int length() const { return static_cast<int>(symbols.size()); }
};

// Deterministic probabilistic finite-state automaton. `topology` is a total
// |Q| x |Sigma| next-state table; `logits` is (|Sigma|+1) x |Q| with the EOS
// row last. Immutable after construction; all operations are pure reads.
struct Dpfsa {
  int num_states = 1;
  Alphabet alphabet;
  int initial_state = 0;
  Eigen::MatrixXi topology;  // |Q| x |Sigma|
  Eigen::MatrixXd logits;    // (|Sigma|+1) x |Q|
  int declared_rank = 1;
  ParamMode param_mode = ParamMode::softmax_logits;
};

struct Violation {
  std::string code;
  std::string message;
  int state = -1;  // offending state/column, -1 when not column-specific
};

// Returns every violated invariant with its location; empty means valid.
std::vector<Violation> validate(const Dpfsa& a);

// Throws ErrorCode::validation when validate() is non-empty.
void require_valid(const Dpfsa& a);

// Probability vector over the alphabet plus EOS for one state.
Eigen::VectorXd next_distribution(const Dpfsa& a, int state);

// Log of the above, in nats; -inf entries possible in explicit mode.
Eigen::VectorXd next_log_distribution(const Dpfsa& a, int state);

// All per-state distributions as columns of one (|Sigma|+1) x |Q| matrix.
Eigen::MatrixXd next_distribution_matrix(const Dpfsa& a);
Eigen::MatrixXd next_log_distribution_matrix(const Dpfsa& a);

int step(const Dpfsa& a, int state, int symbol);

// Log-probability of the full string (including the EOS factor), nats.
double string_logprob(const Dpfsa& a, const StringRecord& s);

// Per-step log-probabilities along the string's unique path. Emits length()
// entries for truncated records (no EOS term) and length()+1 otherwise.
std::vector<double> per_token_logprobs(const Dpfsa& a, const StringRecord& s);

// Number of singular values of the logit matrix above tol * sigma_max.
int logit_rank(const Dpfsa& a, double tol = kRankTol);

// JSON round-trips bit-exactly for finite logits; -inf is stored as "-inf".
std::string dpfsa_to_json(const Dpfsa& a);
Dpfsa dpfsa_from_json(const std::string& text);
void save_dpfsa(const Dpfsa& a, const std::string& path);
Dpfsa load_dpfsa(const std::string& path);

}  // namespace rlmlab
