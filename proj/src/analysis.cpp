#include "analysis.hpp"

#include <cmath>
#include <vector>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "errors.hpp"

namespace rlmlab {

namespace {

// Per-state next-outcome entropy in nats (0 log 0 = 0).
Eigen::VectorXd state_entropies_nats(const Eigen::MatrixXd& probs) {
  Eigen::VectorXd xi(probs.cols());
  for (int q = 0; q < probs.cols(); ++q) {
    double h = 0.0;
    for (int i = 0; i < probs.rows(); ++i) {
      double p = probs(i, q);
      if (p > 0.0) h -= p * std::log(p);
    }
    xi[q] = h;
  }
  return xi;
}

// Explicit-mode automata may have absorbing components that never terminate;
// restrict the solve to states reachable from the start and require each of
// them to reach positive final weight.
struct ReachableSet {
  std::vector<int> states;      // reachable state ids, ascending
  std::vector<int> index_of;    // state id -> position in `states`, or -1
};

ReachableSet reachable_states(const Dpfsa& a, const Eigen::MatrixXd& probs) {
  std::vector<char> seen(a.num_states, 0);
  std::vector<int> stack{a.initial_state};
  seen[a.initial_state] = 1;
  while (!stack.empty()) {
    int q = stack.back();
    stack.pop_back();
    for (int y = 0; y < a.alphabet.size; ++y) {
      if (probs(y, q) <= 0.0) continue;
      int dst = a.topology(q, y);
      if (!seen[dst]) {
        seen[dst] = 1;
        stack.push_back(dst);
      }
    }
  }
  ReachableSet r;
  r.index_of.assign(a.num_states, -1);
  for (int q = 0; q < a.num_states; ++q) {
    if (seen[q]) {
      r.index_of[q] = static_cast<int>(r.states.size());
      r.states.push_back(q);
    }
  }
  return r;
}

void check_termination(const Dpfsa& a, const Eigen::MatrixXd& probs,
                       const ReachableSet& reach) {
  // Reverse reachability from states with positive final weight.
  std::vector<char> can_stop(a.num_states, 0);
  const int eos = a.alphabet.eos_id();
  bool changed = true;
  for (int q = 0; q < a.num_states; ++q)
    if (probs(eos, q) > 0.0) can_stop[q] = 1;
  while (changed) {
    changed = false;
    for (int q = 0; q < a.num_states; ++q) {
      if (can_stop[q]) continue;
      for (int y = 0; y < a.alphabet.size; ++y) {
        if (probs(y, q) > 0.0 && can_stop[a.topology(q, y)]) {
          can_stop[q] = 1;
          changed = true;
          break;
        }
      }
    }
  }
  for (int q : reach.states) {
    if (!can_stop[q])
      fail(ErrorCode::non_terminating,
           "state " + std::to_string(q) +
               " is reachable but can never terminate (final weight 0 with no escape)");
  }
}

}  // namespace

Eigen::MatrixXd transition_matrix(const Dpfsa& a) {
  Eigen::MatrixXd probs = next_distribution_matrix(a);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a.num_states, a.num_states);
  for (int q = 0; q < a.num_states; ++q)
    for (int y = 0; y < a.alphabet.size; ++y) m(q, a.topology(q, y)) += probs(y, q);
  return m;
}

Eigen::VectorXd visit_expectations(const Dpfsa& a) {
  Eigen::MatrixXd probs = next_distribution_matrix(a);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a.num_states, a.num_states);
  for (int q = 0; q < a.num_states; ++q)
    for (int y = 0; y < a.alphabet.size; ++y) m(q, a.topology(q, y)) += probs(y, q);

  ReachableSet reach = reachable_states(a, probs);
  if (a.param_mode == ParamMode::explicit_probs) check_termination(a, probs, reach);

  const int n = static_cast<int>(reach.states.size());
  Eigen::MatrixXd msub(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) msub(i, j) = m(reach.states[i], reach.states[j]);

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  alpha[reach.index_of[a.initial_state]] = 1.0;

  // Solve (I - M)^T x = alpha by LU with partial pivoting.
  Eigen::MatrixXd system = (Eigen::MatrixXd::Identity(n, n) - msub).transpose();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  Eigen::VectorXd x = lu.solve(alpha);
  double residual = (system * x - alpha).lpNorm<Eigen::Infinity>();
  if (!x.allFinite() || residual > 1e-8)
    fail(ErrorCode::numeric, "visit-expectation solve failed (residual " +
                                 std::to_string(residual) + ")");

  Eigen::VectorXd full = Eigen::VectorXd::Zero(a.num_states);
  for (int i = 0; i < n; ++i) full[reach.states[i]] = x[i];
  return full;
}

double entropy_nats(const Dpfsa& a) {
  Eigen::MatrixXd probs = next_distribution_matrix(a);
  Eigen::VectorXd xi = state_entropies_nats(probs);
  return visit_expectations(a).dot(xi);
}

double entropy_bits(const Dpfsa& a) { return entropy_nats(a) / M_LN2; }

double expected_length(const Dpfsa& a) { return visit_expectations(a).sum() - 1.0; }

Eigen::MatrixXd logprob_matrix(const Dpfsa& a) { return next_log_distribution_matrix(a); }

int logprob_matrix_rank(const Dpfsa& a, double tol) {
  Eigen::MatrixXd lp = logprob_matrix(a);
  if (!lp.allFinite())
    fail(ErrorCode::numeric, "logprob_matrix_rank requires full support");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(lp);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  double cutoff = tol * sv[0];
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > cutoff) ++rank;
  return rank;
}

AnalysisReport analyze(const Dpfsa& a) {
  AnalysisReport r;
  Eigen::MatrixXd probs = next_distribution_matrix(a);
  Eigen::MatrixXd m = transition_matrix(a);
  r.spectral_margin = 1.0 - m.rowwise().sum().maxCoeff();
  r.visit_expectations = visit_expectations(a);
  r.entropy_bits = r.visit_expectations.dot(state_entropies_nats(probs)) / M_LN2;
  r.expected_length = r.visit_expectations.sum() - 1.0;
  r.logprob_matrix_rank = logprob_matrix(a).allFinite() ? logprob_matrix_rank(a) : -1;
  return r;
}

std::string analysis_to_json(const AnalysisReport& r) {
  nlohmann::json j;
  j["entropy_bits"] = r.entropy_bits;
  j["expected_length"] = r.expected_length;
  j["spectral_margin"] = r.spectral_margin;
  if (r.logprob_matrix_rank >= 0) j["logprob_matrix_rank"] = r.logprob_matrix_rank;
  else j["logprob_matrix_rank"] = nullptr;
  j["visit_expectations"] = std::vector<double>(
      r.visit_expectations.data(), r.visit_expectations.data() + r.visit_expectations.size());
  return j.dump();
}

}  // namespace rlmlab
