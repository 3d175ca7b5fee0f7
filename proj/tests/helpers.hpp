#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// here deliberately avoid the linear-solve/SVD code paths they are used to
// check: entropy and length come from depth-limited dynamic programming over
// prefix paths with explicit tail bounds, and small cases are additionally
// cross-checked by literal string enumeration.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "analysis.hpp"
#include "automaton.hpp"
#include "generation.hpp"
#include "rnn.hpp"

namespace rlmlab::testing {

// 1-state automaton over {a} with p(a) = p(EOS) = 1/2 (softmax of equal
// logits is exact). H = 2 bits, E[len] = 1.
inline Dpfsa make_geometric() {
  Dpfsa a;
  a.num_states = 1;
  a.alphabet.size = 1;
  a.initial_state = 0;
  a.topology = Eigen::MatrixXi::Zero(1, 1);
  a.logits = Eigen::MatrixXd::Zero(2, 1);
  a.declared_rank = 1;
  a.param_mode = ParamMode::softmax_logits;
  return a;
}

// 1-state automaton over {a} with arbitrary continue probability.
inline Dpfsa make_geometric_p(double p_continue) {
  Dpfsa a = make_geometric();
  a.logits(0, 0) = std::log(p_continue);
  a.logits(1, 0) = std::log(1.0 - p_continue);
  a.param_mode = ParamMode::explicit_probs;
  return a;
}

// The two-symbol example automaton with p(a b^n a b^m) = .6 .1^n .9 .7^m .3
// and p(b b^m) = .4 .7^m .3; symbols a=0, b=1. Zero-probability events make
// this an explicit-mode automaton.
inline Dpfsa make_branching_example() {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Dpfsa a;
  a.num_states = 3;
  a.alphabet.size = 2;
  a.initial_state = 0;
  a.topology.resize(3, 2);
  a.topology << 1, 2,   // state 0: a -> 1, b -> 2
                2, 1,   // state 1: a -> 2, b -> 1
                2, 2;   // state 2: a never fires, b -> 2
  a.logits.resize(3, 3);
  a.logits.col(0) << std::log(0.6), std::log(0.4), -kInf;
  a.logits.col(1) << std::log(0.9), std::log(0.1), -kInf;
  a.logits.col(2) << -kInf, std::log(0.7), std::log(0.3);
  a.declared_rank = 3;
  a.param_mode = ParamMode::explicit_probs;
  return a;
}

// Deterministic chain emitting exactly "ab" (a=0, b=1) with probability 1.
inline Dpfsa make_point_mass_ab() {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Dpfsa a;
  a.num_states = 3;
  a.alphabet.size = 2;
  a.initial_state = 0;
  a.topology.resize(3, 2);
  a.topology << 1, 1,
                2, 2,
                2, 2;
  a.logits.resize(3, 3);
  a.logits.col(0) << 0.0, -kInf, -kInf;   // emit a
  a.logits.col(1) << -kInf, 0.0, -kInf;   // emit b
  a.logits.col(2) << -kInf, -kInf, 0.0;   // stop
  a.declared_rank = 3;
  a.param_mode = ParamMode::explicit_probs;
  return a;
}

// Random softmax automaton drawn through the generation pipeline.
inline Dpfsa random_automaton(std::uint64_t seed, int num_states, int alphabet_size,
                              double logit_std = 2.0) {
  StreamRng topo_rng(seed, "test-topology");
  StreamRng logit_rng(seed, "test-logits");
  Dpfsa a;
  a.num_states = num_states;
  a.alphabet.size = alphabet_size;
  a.initial_state = 0;
  a.topology = sample_topology(topo_rng, num_states, alphabet_size);
  a.logits = sample_logits(logit_rng, alphabet_size, num_states, logit_std);
  a.declared_rank = std::min(num_states, alphabet_size + 1);
  a.param_mode = ParamMode::softmax_logits;
  return a;
}

// Depth-limited exact sums over all strings of length <= depth, computed by
// forward DP over (state, length) with mass-weighted accumulated surprisal.
struct PathDpResult {
  double mass = 0.0;            // total probability of strings with len <= depth
  double entropy_nats = 0.0;    // sum p(y) * (-ln p(y)) over those strings
  double expected_length = 0.0; // sum p(y) * |y| over those strings
  double tail_mass = 0.0;       // exact remaining mass beyond the depth
  double entropy_tail_bound = 0.0;
  double length_tail_bound = 0.0;
};

inline PathDpResult path_dp(const Dpfsa& a, int depth) {
  const int n = a.num_states;
  const int eos = a.alphabet.eos_id();
  Eigen::MatrixXd probs = next_distribution_matrix(a);

  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  v[a.initial_state] = 1.0;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);

  PathDpResult out;
  for (int len = 0; len <= depth; ++len) {
    for (int q = 0; q < n; ++q) {
      double rho = probs(eos, q);
      if (rho > 0.0 && v[q] > 0.0) {
        out.mass += v[q] * rho;
        out.entropy_nats += rho * (s[q] + v[q] * (-std::log(rho)));
        out.expected_length += v[q] * rho * len;
      }
    }
    if (len == depth) break;
    Eigen::VectorXd v_next = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd s_next = Eigen::VectorXd::Zero(n);
    for (int q = 0; q < n; ++q) {
      if (v[q] == 0.0 && s[q] == 0.0) continue;
      for (int y = 0; y < a.alphabet.size; ++y) {
        double w = probs(y, q);
        if (w <= 0.0) continue;
        int dst = a.topology(q, y);
        v_next[dst] += v[q] * w;
        s_next[dst] += w * (s[q] + v[q] * (-std::log(w)));
      }
    }
    v = std::move(v_next);
    s = std::move(s_next);
  }
  out.tail_mass = 1.0 - out.mass;

  // Crude tail bounds: P(len >= n) <= c^n with c the max continue
  // probability, and -ln p(y) <= a |y| + b from the smallest positive
  // transition and final weights.
  Eigen::MatrixXd m = transition_matrix(a);
  double c = m.rowwise().sum().maxCoeff();
  double w_min = 1.0, rho_min = 1.0;
  for (int q = 0; q < n; ++q) {
    for (int y = 0; y < a.alphabet.size; ++y)
      if (probs(y, q) > 0.0) w_min = std::min(w_min, probs(y, q));
    if (probs(eos, q) > 0.0) rho_min = std::min(rho_min, probs(eos, q));
  }
  double surprisal_slope = -std::log(w_min);
  double surprisal_const = -std::log(rho_min);
  if (c < 1.0) {
    const double big_n = depth + 1;
    double geo = std::pow(c, big_n) / (1.0 - c);
    double geo_n =
        std::pow(c, big_n) * (big_n * (1.0 - c) + c) / ((1.0 - c) * (1.0 - c));
    out.entropy_tail_bound = surprisal_slope * geo_n + surprisal_const * geo;
    out.length_tail_bound = geo_n;
  } else {
    out.entropy_tail_bound = std::numeric_limits<double>::infinity();
    out.length_tail_bound = std::numeric_limits<double>::infinity();
  }
  return out;
}

// Literal enumeration of every string up to the depth; wholly independent of
// the DP above (walks strings, not state vectors).
struct EnumerationResult {
  double mass = 0.0;
  double entropy_nats = 0.0;
  double expected_length = 0.0;
};

inline EnumerationResult enumerate_strings(const Dpfsa& a, int depth) {
  EnumerationResult out;
  StringRecord rec;
  std::function<void(int)> visit = [&](int remaining) {
    double lp = string_logprob(a, rec);
    if (lp > -std::numeric_limits<double>::infinity()) {
      double p = std::exp(lp);
      out.mass += p;
      out.entropy_nats += p * (-lp);
      out.expected_length += p * rec.length();
    }
    if (remaining == 0) return;
    for (int y = 0; y < a.alphabet.size; ++y) {
      rec.symbols.push_back(y);
      visit(remaining - 1);
      rec.symbols.pop_back();
    }
  };
  visit(depth);
  return out;
}

// Exact KL(p || q) over strings up to the depth via DP over state pairs,
// plus a bound on the truncated remainder. Both automata must share the
// alphabet and q must have full support along p's strings.
struct PairKlResult {
  double kl_nats = 0.0;
  double tail_bound_nats = 0.0;
};

inline PairKlResult pair_kl_dp(const Dpfsa& p, const Dpfsa& q, int depth) {
  if (p.alphabet.size != q.alphabet.size)
    throw std::runtime_error("pair_kl_dp: alphabet mismatch");
  const int np = p.num_states, nq = q.num_states;
  const int eos = p.alphabet.eos_id();
  Eigen::MatrixXd pp = next_distribution_matrix(p);
  Eigen::MatrixXd qq = next_distribution_matrix(q);

  auto idx = [nq](int i, int j) { return i * nq + j; };
  Eigen::VectorXd v = Eigen::VectorXd::Zero(np * nq);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(np * nq);
  v[idx(p.initial_state, q.initial_state)] = 1.0;

  PairKlResult out;
  double log_ratio_max = 0.0;
  for (int i = 0; i < np; ++i)
    for (int y = 0; y <= p.alphabet.size; ++y)
      for (int j = 0; j < nq; ++j)
        if (pp(y, i) > 0.0)
          log_ratio_max =
              std::max(log_ratio_max, std::abs(std::log(pp(y, i) / qq(y, j))));

  for (int len = 0; len <= depth; ++len) {
    for (int i = 0; i < np; ++i) {
      double rho_p = pp(eos, i);
      if (rho_p <= 0.0) continue;
      for (int j = 0; j < nq; ++j) {
        int k = idx(i, j);
        if (v[k] == 0.0 && s[k] == 0.0) continue;
        out.kl_nats += rho_p * (s[k] + v[k] * std::log(rho_p / qq(eos, j)));
      }
    }
    if (len == depth) break;
    Eigen::VectorXd v_next = Eigen::VectorXd::Zero(np * nq);
    Eigen::VectorXd s_next = Eigen::VectorXd::Zero(np * nq);
    for (int i = 0; i < np; ++i) {
      for (int y = 0; y < p.alphabet.size; ++y) {
        double wp = pp(y, i);
        if (wp <= 0.0) continue;
        int di = p.topology(i, y);
        for (int j = 0; j < nq; ++j) {
          int k = idx(i, j);
          if (v[k] == 0.0 && s[k] == 0.0) continue;
          int dj = q.topology(j, y);
          int dk = idx(di, dj);
          v_next[dk] += v[k] * wp;
          s_next[dk] += wp * (s[k] + v[k] * std::log(wp / qq(y, j)));
        }
      }
    }
    v = std::move(v_next);
    s = std::move(s_next);
  }

  Eigen::MatrixXd m = transition_matrix(p);
  double c = m.rowwise().sum().maxCoeff();
  if (c < 1.0) {
    const double big_n = depth + 1;
    double geo = std::pow(c, big_n) / (1.0 - c);
    double geo_n =
        std::pow(c, big_n) * (big_n * (1.0 - c) + c) / ((1.0 - c) * (1.0 - c));
    out.tail_bound_nats = log_ratio_max * (geo_n + geo);
  } else {
    out.tail_bound_nats = std::numeric_limits<double>::infinity();
  }
  return out;
}

// Central-difference gradient of the batch NLL with respect to every
// parameter, for checking backpropagation.
inline Gradients finite_difference_gradients(RnnLm lm,
                                             const std::vector<StringRecord>& batch,
                                             double eps = 1e-5) {
  Gradients fd = Gradients::zeros_like(lm);
  auto probe = [&](double* param, double* slot) {
    double saved = *param;
    *param = saved + eps;
    double up = nll(lm, batch);
    *param = saved - eps;
    double down = nll(lm, batch);
    *param = saved;
    *slot = (up - down) / (2.0 * eps);
  };
  auto sweep_m = [&](Eigen::MatrixXd& theta, Eigen::MatrixXd& slot) {
    for (int i = 0; i < theta.size(); ++i) probe(theta.data() + i, slot.data() + i);
  };
  auto sweep_v = [&](Eigen::VectorXd& theta, Eigen::VectorXd& slot) {
    for (int i = 0; i < theta.size(); ++i) probe(theta.data() + i, slot.data() + i);
  };
  sweep_m(lm.embed, fd.embed);
  sweep_m(lm.w, fd.w);
  sweep_m(lm.u, fd.u);
  sweep_m(lm.e_out, fd.e_out);
  sweep_v(lm.b, fd.b);
  sweep_v(lm.h0, fd.h0);
  return fd;
}

inline double max_relative_gradient_error(const Gradients& got, const Gradients& want) {
  double worst = 0.0;
  auto cmp = [&worst](const auto& a, const auto& b) {
    for (int i = 0; i < a.size(); ++i) {
      double denom = std::max({std::abs(*(a.data() + i)), std::abs(*(b.data() + i)), 1e-8});
      worst = std::max(worst, std::abs(*(a.data() + i) - *(b.data() + i)) / denom);
    }
  };
  cmp(got.embed, want.embed);
  cmp(got.w, want.w);
  cmp(got.u, want.u);
  cmp(got.e_out, want.e_out);
  cmp(got.b, want.b);
  cmp(got.h0, want.h0);
  return worst;
}

}  // namespace rlmlab::testing
