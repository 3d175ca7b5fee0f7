#include "automaton.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "util.hpp"

namespace rlmlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stable log-softmax of one logit column.
Eigen::VectorXd log_softmax(const Eigen::VectorXd& col) {
  double mx = col.maxCoeff();
  double lse = std::log((col.array() - mx).exp().sum()) + mx;
  return col.array() - lse;
}

}  // namespace

const char* param_mode_name(ParamMode mode) {
  return mode == ParamMode::softmax_logits ? "softmax_logits" : "explicit_probs";
}

ParamMode param_mode_from_name(const std::string& name) {
  if (name == "softmax_logits") return ParamMode::softmax_logits;
  if (name == "explicit_probs") return ParamMode::explicit_probs;
  fail(ErrorCode::parse, "unknown param_mode: " + name);
}

std::vector<Violation> validate(const Dpfsa& a) {
  std::vector<Violation> out;
  auto add = [&out](std::string code, std::string message, int state = -1) {
    out.push_back({std::move(code), std::move(message), state});
  };

  if (a.num_states < 1) add("num_states", "num_states must be >= 1");
  if (a.alphabet.size < 1) add("alphabet", "alphabet size must be >= 1");
  if (a.num_states < 1 || a.alphabet.size < 1) return out;

  if (a.initial_state < 0 || a.initial_state >= a.num_states)
    add("initial_state", "initial_state out of range");

  if (a.topology.rows() != a.num_states || a.topology.cols() != a.alphabet.size) {
    add("topology", "topology must be |Q| x |Sigma|");
  } else {
    for (int q = 0; q < a.num_states; ++q) {
      for (int y = 0; y < a.alphabet.size; ++y) {
        int dst = a.topology(q, y);
        if (dst < 0 || dst >= a.num_states) {
          add("topology", "successor out of range for symbol " + std::to_string(y), q);
        }
      }
    }
  }

  const int m = a.alphabet.num_outcomes();
  if (a.logits.rows() != m || a.logits.cols() != a.num_states) {
    add("logits", "logits must be (|Sigma|+1) x |Q|");
    return out;
  }

  int max_rank = std::min(a.num_states, m);
  if (a.declared_rank < 1 || a.declared_rank > max_rank)
    add("declared_rank", "declared_rank must lie in [1, min(|Q|, |Sigma|+1)]");

  for (int q = 0; q < a.num_states; ++q) {
    Eigen::VectorXd col = a.logits.col(q);
    bool has_nan = false, has_posinf = false, has_neginf = false;
    for (int i = 0; i < m; ++i) {
      if (std::isnan(col[i])) has_nan = true;
      else if (col[i] == kInf) has_posinf = true;
      else if (col[i] == -kInf) has_neginf = true;
    }
    if (has_nan) add("finite", "NaN logit entry", q);
    if (has_posinf) add("finite", "+inf logit entry", q);
    if (has_nan || has_posinf) continue;

    if (a.param_mode == ParamMode::softmax_logits) {
      if (has_neginf) {
        add("support", "softmax mode requires finite logits (full support)", q);
        continue;
      }
      Eigen::VectorXd p = log_softmax(col).array().exp();
      if ((p.array() <= 0.0).any())
        add("support", "softmax distribution lost full support (underflow)", q);
      if (std::abs(p.sum() - 1.0) > kSoftmaxNormTol)
        add("normalization", "softmax column does not sum to 1 within 1e-12", q);
    } else {
      double sum = col.array().exp().sum();
      if (std::abs(sum - 1.0) > kExplicitNormTol)
        add("normalization",
            "explicit log-probability column sums to " + fmt_double(sum) +
                ", not 1 within 1e-9",
            q);
    }
  }
  return out;
}

void require_valid(const Dpfsa& a) {
  auto v = validate(a);
  if (v.empty()) return;
  std::string msg = "invalid automaton:";
  for (const auto& viol : v) {
    msg += " [" + viol.code;
    if (viol.state >= 0) msg += "@" + std::to_string(viol.state);
    msg += "] " + viol.message + ";";
  }
  fail(ErrorCode::validation, msg);
}

Eigen::VectorXd next_log_distribution(const Dpfsa& a, int state) {
  if (state < 0 || state >= a.num_states)
    fail(ErrorCode::invalid_argument, "state out of range: " + std::to_string(state));
  if (a.param_mode == ParamMode::softmax_logits) return log_softmax(a.logits.col(state));
  return a.logits.col(state);
}

Eigen::VectorXd next_distribution(const Dpfsa& a, int state) {
  Eigen::VectorXd p = next_log_distribution(a, state).array().exp();
  // Explicit-mode columns may carry up to 1e-9 of input rounding.
  p /= p.sum();
  return p;
}

Eigen::MatrixXd next_log_distribution_matrix(const Dpfsa& a) {
  Eigen::MatrixXd out(a.alphabet.num_outcomes(), a.num_states);
  for (int q = 0; q < a.num_states; ++q) out.col(q) = next_log_distribution(a, q);
  return out;
}

Eigen::MatrixXd next_distribution_matrix(const Dpfsa& a) {
  Eigen::MatrixXd out(a.alphabet.num_outcomes(), a.num_states);
  for (int q = 0; q < a.num_states; ++q) out.col(q) = next_distribution(a, q);
  return out;
}

int step(const Dpfsa& a, int state, int symbol) {
  if (state < 0 || state >= a.num_states)
    fail(ErrorCode::invalid_argument, "state out of range: " + std::to_string(state));
  if (symbol == a.alphabet.eos_id())
    fail(ErrorCode::invalid_argument, "EOS terminates generation and is not a transition label");
  if (symbol < 0 || symbol >= a.alphabet.size)
    fail(ErrorCode::invalid_argument, "symbol out of range: " + std::to_string(symbol));
  return a.topology(state, symbol);
}

double string_logprob(const Dpfsa& a, const StringRecord& s) {
  double total = 0.0;
  for (double lp : per_token_logprobs(a, s)) total += lp;
  return total;
}

std::vector<double> per_token_logprobs(const Dpfsa& a, const StringRecord& s) {
  Eigen::MatrixXd logp = next_log_distribution_matrix(a);
  std::vector<double> out;
  out.reserve(s.symbols.size() + 1);
  int q = a.initial_state;
  for (int y : s.symbols) {
    if (y < 0 || y >= a.alphabet.size)
      fail(ErrorCode::invalid_argument, "symbol id out of range in string");
    out.push_back(logp(y, q));
    q = a.topology(q, y);
  }
  if (!s.truncated) out.push_back(logp(a.alphabet.eos_id(), q));
  return out;
}

int logit_rank(const Dpfsa& a, double tol) {
  if (!a.logits.allFinite())
    fail(ErrorCode::numeric, "logit_rank requires finite logits (explicit mode with -inf entries)");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.logits);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  double cutoff = tol * sv[0];
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > cutoff) ++rank;
  return rank;
}

std::string dpfsa_to_json(const Dpfsa& a) {
  nlohmann::json j;
  j["num_states"] = a.num_states;
  j["alphabet_size"] = a.alphabet.size;
  j["initial_state"] = a.initial_state;
  j["declared_rank"] = a.declared_rank;
  j["param_mode"] = param_mode_name(a.param_mode);

  nlohmann::json topo = nlohmann::json::array();
  for (int q = 0; q < a.topology.rows(); ++q)
    for (int y = 0; y < a.topology.cols(); ++y) topo.push_back(a.topology(q, y));
  j["topology"] = std::move(topo);

  // Row-major; JSON has no -inf literal, so it is stored as the string "-inf".
  nlohmann::json lg = nlohmann::json::array();
  for (int r = 0; r < a.logits.rows(); ++r) {
    for (int c = 0; c < a.logits.cols(); ++c) {
      double v = a.logits(r, c);
      if (v == -kInf) lg.push_back("-inf");
      else lg.push_back(v);
    }
  }
  j["logits"] = std::move(lg);
  return j.dump(2) + "\n";
}

Dpfsa dpfsa_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("automaton JSON parse error: ") + e.what());
  }
  Dpfsa a;
  try {
    a.num_states = j.at("num_states").get<int>();
    a.alphabet.size = j.at("alphabet_size").get<int>();
    a.initial_state = j.at("initial_state").get<int>();
    a.declared_rank = j.at("declared_rank").get<int>();
    a.param_mode = param_mode_from_name(j.at("param_mode").get<std::string>());

    const auto& topo = j.at("topology");
    if (static_cast<int>(topo.size()) != a.num_states * a.alphabet.size)
      fail(ErrorCode::parse, "topology array has wrong length");
    a.topology.resize(a.num_states, a.alphabet.size);
    for (int q = 0; q < a.num_states; ++q)
      for (int y = 0; y < a.alphabet.size; ++y)
        a.topology(q, y) = topo[q * a.alphabet.size + y].get<int>();

    const int m = a.alphabet.num_outcomes();
    const auto& lg = j.at("logits");
    if (static_cast<int>(lg.size()) != m * a.num_states)
      fail(ErrorCode::parse, "logits array has wrong length");
    a.logits.resize(m, a.num_states);
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < a.num_states; ++c) {
        const auto& cell = lg[r * a.num_states + c];
        if (cell.is_string()) {
          if (cell.get<std::string>() != "-inf")
            fail(ErrorCode::parse, "unexpected logit string: " + cell.get<std::string>());
          a.logits(r, c) = -kInf;
        } else {
          a.logits(r, c) = cell.get<double>();
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("automaton JSON field error: ") + e.what());
  }
  return a;
}

void save_dpfsa(const Dpfsa& a, const std::string& path) {
  write_file(path, dpfsa_to_json(a));
}

Dpfsa load_dpfsa(const std::string& path) { return dpfsa_from_json(read_file(path)); }

}  // namespace rlmlab
