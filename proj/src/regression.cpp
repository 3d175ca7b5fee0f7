#include "regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/QR>

#include "errors.hpp"
#include "util.hpp"

namespace rlmlab {

const char* const kResultsHeader =
    "automaton_id\tmodel_id\tD\tnum_states\talphabet_size\tnum_transitions\trank\t"
    "exp_len\tmin_rank_bound\tH_bits\tkl_bits\tkl_stderr_bits";

std::string results_to_tsv(const std::vector<EvalRecordRow>& rows) {
  std::ostringstream out;
  out << kResultsHeader << "\n";
  for (const auto& r : rows) {
    out << r.automaton_id << "\t" << r.model_id << "\t" << r.d << "\t" << r.num_states
        << "\t" << r.alphabet_size << "\t" << r.num_states * r.alphabet_size << "\t"
        << r.rank << "\t" << fmt_double(r.exp_len) << "\t"
        << std::min(r.num_states, r.alphabet_size + 1) << "\t" << fmt_double(r.h_bits)
        << "\t" << fmt_double(r.kl_bits) << "\t" << fmt_double(r.kl_stderr_bits) << "\n";
  }
  return out.str();
}

std::vector<EvalRecordRow> results_from_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::parse, "results TSV is empty");
  auto header = split(line, '\t');
  auto expect = split(kResultsHeader, '\t');
  if (header != expect) fail(ErrorCode::parse, "results TSV header mismatch");
  std::vector<EvalRecordRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != expect.size())
      fail(ErrorCode::parse, "results TSV line " + std::to_string(lineno) +
                                 " has wrong field count");
    EvalRecordRow r;
    try {
      r.automaton_id = f[0];
      r.model_id = f[1];
      r.d = std::stoi(f[2]);
      r.num_states = std::stoi(f[3]);
      r.alphabet_size = std::stoi(f[4]);
      r.rank = std::stoi(f[6]);
      r.exp_len = std::stod(f[7]);
      r.h_bits = std::stod(f[9]);
      r.kl_bits = std::stod(f[10]);
      r.kl_stderr_bits = std::stod(f[11]);
    } catch (const std::exception& e) {
      fail(ErrorCode::parse,
           "results TSV line " + std::to_string(lineno) + ": " + e.what());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::VectorXd zscore(const Eigen::VectorXd& column) {
  const int n = static_cast<int>(column.size());
  if (n < 2) fail(ErrorCode::invalid_argument, "zscore needs at least 2 values");
  double mean = column.mean();
  double ss = (column.array() - mean).square().sum();
  double sd = std::sqrt(ss / (n - 1));
  if (sd == 0.0 || !std::isfinite(sd))
    fail(ErrorCode::validation, "cannot standardize a constant column");
  return (column.array() - mean) / sd;
}

DesignMatrix build_design_matrix(const std::vector<EvalRecordRow>& records) {
  const int n = static_cast<int>(records.size());
  const std::vector<std::string> names = {"|Q|",      "|Sigma|",        "|Q||Sigma|",
                                          "R",        "Exp. len.",      "min(|Q|,|Sigma|+1)",
                                          "H(A)",     "D"};
  const int k = static_cast<int>(names.size());
  if (n < k + 2)
    fail(ErrorCode::invalid_argument,
         "need at least " + std::to_string(k + 2) + " records, got " + std::to_string(n));

  Eigen::MatrixXd raw(n, k);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = records[i];
    raw(i, 0) = r.num_states;
    raw(i, 1) = r.alphabet_size;
    raw(i, 2) = static_cast<double>(r.num_states) * r.alphabet_size;
    raw(i, 3) = r.rank;
    raw(i, 4) = r.exp_len;
    raw(i, 5) = std::min(r.num_states, r.alphabet_size + 1);
    raw(i, 6) = r.h_bits;
    raw(i, 7) = r.d;
    y[i] = r.kl_bits;
  }

  DesignMatrix dm;
  dm.x.resize(n, k + 1);
  dm.x.col(0).setOnes();
  dm.column_names.push_back("Intercept");
  for (int j = 0; j < k; ++j) {
    try {
      dm.x.col(j + 1) = zscore(raw.col(j));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::validation)
        fail(ErrorCode::validation, "constant predictor column: " + names[j]);
      throw;
    }
    dm.column_names.push_back(names[j]);
  }
  dm.y = y;
  return dm;
}

RegressionFit ols_fit(const DesignMatrix& dm) {
  const int n = static_cast<int>(dm.x.rows());
  const int p = static_cast<int>(dm.x.cols());
  if (dm.y.size() != n) fail(ErrorCode::invalid_argument, "X and y row counts differ");
  if (n <= p) fail(ErrorCode::invalid_argument, "not enough rows for OLS");

  // Canonical row order: the least-squares solution is permutation-invariant,
  // and sorting makes the factorization bit-stable under input reordering.
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    for (int j = 0; j < p; ++j) {
      if (dm.x(a, j) != dm.x(b, j)) return dm.x(a, j) < dm.x(b, j);
    }
    return dm.y[a] < dm.y[b];
  });
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x.row(i) = dm.x.row(idx[i]);
    y[i] = dm.y[idx[i]];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::string dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (int j = qr.rank(); j < p; ++j) {
      if (!dependent.empty()) dependent += ", ";
      dependent += dm.column_names.empty() ? std::to_string(perm[j])
                                           : dm.column_names[perm[j]];
    }
    fail(ErrorCode::validation, "design matrix is rank deficient; dependent columns: " +
                                    dependent);
  }

  RegressionFit fit;
  fit.n = n;
  fit.k = p - 1;
  fit.beta = qr.solve(y);

  Eigen::VectorXd resid = y - x * fit.beta;
  double rss = resid.squaredNorm();
  double ybar = y.mean();
  double tss = (y.array() - ybar).square().sum();
  fit.r_squared = tss > 0 ? 1.0 - rss / tss : 1.0;
  const int dof = n - p;
  fit.residual_variance = rss / dof;

  // (X^T X)^{-1} = P R^{-1} R^{-T} P^T from the pivoted QR factors.
  Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd xtx_inv_perm = rinv * rinv.transpose();
  Eigen::MatrixXd perm = qr.colsPermutation();
  Eigen::MatrixXd xtx_inv = perm * xtx_inv_perm * perm.transpose();

  fit.stderr_.resize(p);
  fit.t_stats.resize(p);
  fit.p_values.resize(p);
  fit.p_valid = dof >= 200;
  for (int j = 0; j < p; ++j) {
    fit.stderr_[j] = std::sqrt(std::max(0.0, fit.residual_variance * xtx_inv(j, j)));
    if (fit.stderr_[j] > 0.0) {
      fit.t_stats[j] = fit.beta[j] / fit.stderr_[j];
      fit.p_values[j] = std::erfc(std::abs(fit.t_stats[j]) / std::sqrt(2.0));
    } else {
      // Exact interpolation: no residual variance, p reported as 0.
      fit.t_stats[j] = fit.beta[j] == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
      fit.p_values[j] = 0.0;
    }
  }
  return fit;
}

std::string p_display(double p, bool p_valid) {
  if (!p_valid) return "no p-value (small sample)";
  if (p < 0.001) return "<0.001";
  if (p < 0.01) return "<0.01";
  if (p < 0.05) return "<0.05";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", p);
  return buf;
}

RegressionReport regression_report(const RegressionFit& fit, const DesignMatrix& dm) {
  RegressionReport rep;
  std::ostringstream tsv;
  tsv << "predictor\tbeta\tse\tt\tp_value\tp_display\n";
  for (int j = 0; j < fit.beta.size(); ++j) {
    tsv << dm.column_names[j] << "\t" << fmt_double(fit.beta[j]) << "\t"
        << fmt_double(fit.stderr_[j]) << "\t" << fmt_double(fit.t_stats[j]) << "\t"
        << (fit.p_valid ? fmt_double(fit.p_values[j]) : "NA") << "\t"
        << p_display(fit.p_values[j], fit.p_valid) << "\n";
  }
  rep.tsv = tsv.str();

  std::size_t name_w = 9;
  for (const auto& n : dm.column_names) name_w = std::max(name_w, n.size());
  std::ostringstream txt;
  char buf[64];
  txt << std::string(name_w, ' ') << "  " << "    beta" << "      SE" << "  p\n";
  for (int j = 0; j < fit.beta.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%-*s  %8.2f  %6.2f  %s", static_cast<int>(name_w),
                  dm.column_names[j].c_str(), fit.beta[j], fit.stderr_[j],
                  p_display(fit.p_values[j], fit.p_valid).c_str());
    txt << buf << "\n";
  }
  std::snprintf(buf, sizeof(buf), "n = %d, k = %d, R^2 = %.4f", fit.n, fit.k,
                fit.r_squared);
  txt << buf << "\n";
  rep.text_table = txt.str();
  return rep;
}

}  // namespace rlmlab
