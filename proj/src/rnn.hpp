#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dataset.hpp"

namespace rlmlab {

// Single-layer tanh recurrence with hidden width D and an untied output
// matrix over the alphabet plus EOS. h before the first symbol is the learned
// h0; step t emits log softmax(E h_{t-1}).
struct RnnLm {
  int hidden_size = 0;
  int alphabet_size = 0;
  Eigen::MatrixXd embed;  // |Sigma| x D
  Eigen::MatrixXd w;      // D x D recurrence
  Eigen::MatrixXd u;      // D x D input projection
  Eigen::VectorXd b;      // D
  Eigen::VectorXd h0;     // D, learned initial state
  Eigen::MatrixXd e_out;  // (|Sigma|+1) x D output matrix

  int num_outcomes() const { return alphabet_size + 1; }
};

struct TrainConfig {
  int epochs = 2;
  int batch_size = 32;
  double lr = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::optional<double> grad_clip;  // global max-norm, off by default
};

std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

struct Gradients {
  Eigen::MatrixXd embed, w, u, e_out;
  Eigen::VectorXd b, h0;

  static Gradients zeros_like(const RnnLm& lm);
  double squared_norm() const;
  void scale(double s);
};

struct AdamState {
  Gradients m;
  Gradients v;
  long step = 0;

  static AdamState zeros_like(const RnnLm& lm);
};

RnnLm init_model(int hidden_size, int alphabet_size, std::uint64_t seed);

// Per-step log-probability rows over the alphabet plus EOS; |y|+1 steps, the
// last predicting EOS.
Eigen::MatrixXd forward(const RnnLm& lm, const std::vector<int>& symbols);

// Mean per-token negative log-likelihood over the batch, nats. Truncated
// records contribute their prefix only (no EOS step).
double nll(const RnnLm& lm, const std::vector<StringRecord>& batch);

// Exact gradient of nll via backpropagation through time.
Gradients gradients(const RnnLm& lm, const std::vector<StringRecord>& batch);

void adam_step(RnnLm& lm, AdamState& state, const Gradients& grads, const TrainConfig& cfg);

struct TrainResult {
  RnnLm model;
  std::vector<double> epoch_mean_nll;  // token-weighted mean per epoch, nats
};

TrainResult train(const Dataset& dataset, int hidden_size, const TrainConfig& cfg);

struct StringScore {
  int string_index = 0;
  double total_logprob_nats = 0.0;
  std::vector<double> per_token_logprobs_nats;
};

std::vector<StringScore> score(const RnnLm& lm, const std::vector<StringRecord>& strings);

std::string model_to_json(const RnnLm& lm);
RnnLm model_from_json(const std::string& text);
void save_model(const RnnLm& lm, const std::string& path);
RnnLm load_model(const std::string& path);

}  // namespace rlmlab
