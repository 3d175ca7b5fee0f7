#include "evaluation.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "analysis.hpp"
#include "errors.hpp"
#include "util.hpp"

namespace rlmlab {

namespace {

constexpr double kEntrySlop = 1e-9;       // tolerated rounding above 0 per entry
constexpr double kTotalSumTol = 1e-6;     // |total - sum(per_token)|
constexpr double kVectorNormTol = 1e-6;   // per-step logsumexp vs 0

[[noreturn]] void line_fail(int lineno, const std::string& what) {
  fail(ErrorCode::parse, "score file line " + std::to_string(lineno) + ": " + what);
}

}  // namespace

void write_scores(const ScoreFile& scores, const std::string& path) {
  std::ostringstream out;
  nlohmann::json header;
  header["model_id"] = scores.model_id;
  header["automaton_id"] = scores.automaton_id;
  header["units"] = "nats";
  out << header.dump() << "\n";
  for (const auto& rec : scores.records) {
    nlohmann::json j;
    j["string_index"] = rec.string_index;
    j["total_logprob_nats"] = rec.total_logprob_nats;
    j["per_token_logprobs_nats"] = rec.per_token_logprobs_nats;
    if (rec.per_step_logprob_vectors_nats)
      j["per_step_logprob_vectors_nats"] = *rec.per_step_logprob_vectors_nats;
    out << j.dump() << "\n";
  }
  write_file(path, out.str());
}

ScoreFile ingest_external_scores(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  int lineno = 0;

  ScoreFile sf;
  double to_nats = 1.0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      line_fail(lineno, std::string("JSON parse error: ") + e.what());
    }
    if (!header_seen) {
      if (!j.contains("units")) line_fail(lineno, "header must declare units (nats or bits)");
      std::string units = j["units"].get<std::string>();
      if (units == "nats") to_nats = 1.0;
      else if (units == "bits") to_nats = M_LN2;
      else line_fail(lineno, "unknown units: " + units);
      sf.model_id = j.value("model_id", "");
      sf.automaton_id = j.value("automaton_id", "");
      header_seen = true;
      continue;
    }
    ScoreRecord rec;
    try {
      rec.string_index = j.at("string_index").get<int>();
      rec.total_logprob_nats = j.at("total_logprob_nats").get<double>() * to_nats;
      rec.per_token_logprobs_nats = j.at("per_token_logprobs_nats").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      line_fail(lineno, std::string("missing/invalid field: ") + e.what());
    }
    double sum = 0.0;
    for (auto& v : rec.per_token_logprobs_nats) {
      v *= to_nats;
      if (v > kEntrySlop) line_fail(lineno, "per-token log-probability above 0");
      sum += v;
    }
    if (std::abs(sum - rec.total_logprob_nats) > kTotalSumTol)
      line_fail(lineno, "total_logprob does not match the per-token sum");
    if (j.contains("per_step_logprob_vectors_nats")) {
      auto vecs = j["per_step_logprob_vectors_nats"].get<std::vector<std::vector<double>>>();
      if (vecs.size() != rec.per_token_logprobs_nats.size())
        line_fail(lineno, "per-step vector count does not match token count");
      for (auto& v : vecs) {
        double mx = -INFINITY;
        for (auto& x : v) {
          x *= to_nats;
          mx = std::max(mx, x);
        }
        double lse = 0.0;
        for (double x : v) lse += std::exp(x - mx);
        lse = std::log(lse) + mx;
        if (std::abs(lse) > kVectorNormTol)
          line_fail(lineno, "per-step distribution is not normalized");
      }
      rec.per_step_logprob_vectors_nats = std::move(vecs);
    }
    sf.records.push_back(std::move(rec));
  }
  if (!header_seen) fail(ErrorCode::parse, "score file has no header line: " + path);
  return sf;
}

ScoreFile score_automaton(const Dpfsa& a, const Dataset& ds, const std::string& automaton_id) {
  ScoreFile sf;
  sf.model_id = "automaton:" + automaton_id;
  sf.automaton_id = automaton_id;
  sf.records.reserve(ds.test.size());
  for (int i = 0; i < static_cast<int>(ds.test.size()); ++i) {
    ScoreRecord rec;
    rec.string_index = i;
    rec.per_token_logprobs_nats = per_token_logprobs(a, ds.test[i]);
    for (double lp : rec.per_token_logprobs_nats) rec.total_logprob_nats += lp;
    sf.records.push_back(std::move(rec));
  }
  return sf;
}

CrossEntropyEstimate empirical_cross_entropy(const ScoreFile& scores, const Dataset& ds) {
  const int n_test = static_cast<int>(ds.test.size());
  std::vector<const ScoreRecord*> by_index(n_test, nullptr);
  for (const auto& rec : scores.records) {
    if (rec.string_index < 0 || rec.string_index >= n_test)
      fail(ErrorCode::validation,
           "score string_index " + std::to_string(rec.string_index) + " out of range");
    if (by_index[rec.string_index])
      fail(ErrorCode::validation,
           "duplicate score for string_index " + std::to_string(rec.string_index));
    by_index[rec.string_index] = &rec;
  }

  std::vector<double> values_bits;
  int n_excluded = 0;
  for (int i = 0; i < n_test; ++i) {
    const auto& str = ds.test[i];
    if (str.truncated) {
      // Truncated samples have a prefix probability, not a string probability.
      ++n_excluded;
      continue;
    }
    const ScoreRecord* rec = by_index[i];
    if (!rec)
      fail(ErrorCode::validation,
           "missing score for untruncated test string_index " + std::to_string(i));
    const int expected_tokens = str.length() + 1;
    if (static_cast<int>(rec->per_token_logprobs_nats.size()) != expected_tokens)
      fail(ErrorCode::validation,
           "token count mismatch at string_index " + std::to_string(i) + ": expected " +
               std::to_string(expected_tokens) + ", got " +
               std::to_string(rec->per_token_logprobs_nats.size()));
    values_bits.push_back(-rec->total_logprob_nats / M_LN2);
  }
  if (values_bits.empty())
    fail(ErrorCode::validation, "no untruncated test strings to evaluate");

  CrossEntropyEstimate est;
  est.n_strings = static_cast<int>(values_bits.size());
  est.n_excluded_truncated = n_excluded;
  double mean = 0.0;
  for (double v : values_bits) mean += v;
  mean /= est.n_strings;
  est.mean_bits = mean;
  if (est.n_strings > 1) {
    double ss = 0.0;
    for (double v : values_bits) ss += (v - mean) * (v - mean);
    est.stderr_bits = std::sqrt(ss / (est.n_strings - 1)) / std::sqrt(est.n_strings);
  } else {
    est.stderr_bits = 0.0;  // degenerate single-sample estimate
  }
  return est;
}

KlEstimate kl_estimate(const Dpfsa& a, const ScoreFile& scores, const Dataset& ds) {
  CrossEntropyEstimate ce = empirical_cross_entropy(scores, ds);
  KlEstimate kl;
  kl.cross_entropy_bits = ce.mean_bits;
  kl.entropy_bits = entropy_bits(a);
  kl.kl_bits = kl.cross_entropy_bits - kl.entropy_bits;
  kl.stderr_bits = ce.stderr_bits;  // the exact-entropy term has no variance
  kl.n_strings = ce.n_strings;
  kl.n_excluded_truncated = ce.n_excluded_truncated;
  return kl;
}

std::string kl_estimate_to_json(const KlEstimate& e) {
  nlohmann::json j;
  j["kl_bits"] = e.kl_bits;
  j["cross_entropy_bits"] = e.cross_entropy_bits;
  j["entropy_bits"] = e.entropy_bits;
  j["stderr_bits"] = e.stderr_bits;
  j["n_strings"] = e.n_strings;
  j["n_excluded_truncated"] = e.n_excluded_truncated;
  j["low_confidence"] = e.low_confidence();
  return j.dump();
}

}  // namespace rlmlab
