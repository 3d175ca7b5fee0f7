#pragma once

#include <Eigen/Core>

#include "automaton.hpp"

namespace rlmlab {

// Closed-form quantities of one automaton. Entropy is reported in bits;
// internal computation is in nats and converted once here.
struct AnalysisReport {
  double entropy_bits = 0.0;
  double expected_length = 0.0;
  Eigen::VectorXd visit_expectations;  // over Q, includes the initial occupancy
  double spectral_margin = 0.0;        // 1 - max row sum of M
  int logprob_matrix_rank = -1;        // -1 when logits are not finite
};

// M[i][j] = sum over symbols y with tau(q_i, y) = q_j of p(y | q_i).
Eigen::MatrixXd transition_matrix(const Dpfsa& a);

// alpha^T (I - M)^{-1}: expected number of visits per state.
Eigen::VectorXd visit_expectations(const Dpfsa& a);

double entropy_nats(const Dpfsa& a);
double entropy_bits(const Dpfsa& a);

// Expected string length: total expected visit count minus one.
double expected_length(const Dpfsa& a);

// Columnwise log next-symbol probabilities, (|Sigma|+1) x |Q|.
Eigen::MatrixXd logprob_matrix(const Dpfsa& a);

// Numeric rank of the log-probability matrix; bounded by declared_rank + 1.
int logprob_matrix_rank(const Dpfsa& a, double tol = kRankTol);

AnalysisReport analyze(const Dpfsa& a);

std::string analysis_to_json(const AnalysisReport& r);

}  // namespace rlmlab
