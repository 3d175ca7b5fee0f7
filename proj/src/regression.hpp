#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace rlmlab {

// One (automaton, model) result row; the regression's unit of observation.
struct EvalRecordRow {
  std::string automaton_id;
  std::string model_id;
  int d = 0;
  int num_states = 0;
  int alphabet_size = 0;
  int rank = 0;
  double exp_len = 0.0;
  double h_bits = 0.0;
  double kl_bits = 0.0;
  double kl_stderr_bits = 0.0;
};

// Results TSV ("." decimal, "NA" missing, header row).
extern const char* const kResultsHeader;
std::string results_to_tsv(const std::vector<EvalRecordRow>& rows);
std::vector<EvalRecordRow> results_from_tsv(const std::string& text);

// (x - mean) / sample standard deviation; throws on constant input.
Eigen::VectorXd zscore(const Eigen::VectorXd& column);

struct DesignMatrix {
  Eigen::MatrixXd x;  // intercept column of ones first, then z-scored predictors
  Eigen::VectorXd y;  // kl_bits
  std::vector<std::string> column_names;
};

// Predictor columns in fixed order: |Q|, |Sigma|, |Q||Sigma|, R, expected
// length, min(|Q|, |Sigma|+1), entropy, D. Derived columns are computed from
// the raw values before standardization.
DesignMatrix build_design_matrix(const std::vector<EvalRecordRow>& records);

struct RegressionFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd stderr_;
  Eigen::VectorXd t_stats;
  Eigen::VectorXd p_values;
  double r_squared = 0.0;
  double residual_variance = 0.0;
  int n = 0;
  int k = 0;         // predictors excluding the intercept
  bool p_valid = false;  // normal approximation needs n - k - 1 >= 200
};

RegressionFit ols_fit(const DesignMatrix& dm);

// "<0.001" / "<0.01" / "<0.05" below the display cutoffs, numeric otherwise.
std::string p_display(double p, bool p_valid);

struct RegressionReport {
  std::string tsv;
  std::string text_table;
};

RegressionReport regression_report(const RegressionFit& fit, const DesignMatrix& dm);

}  // namespace rlmlab
