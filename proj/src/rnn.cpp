#include "rnn.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "rng.hpp"
#include "util.hpp"

namespace rlmlab {

namespace {

constexpr double kInitStd = 0.1;

void fill_gaussian(Eigen::MatrixXd& m, StreamRng& rng, double stddev) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m(r, c) = rng.gaussian(0.0, stddev);
}

void fill_gaussian(Eigen::VectorXd& v, StreamRng& rng, double stddev) {
  for (int i = 0; i < v.size(); ++i) v[i] = rng.gaussian(0.0, stddev);
}

Eigen::VectorXd log_softmax_vec(const Eigen::VectorXd& logits) {
  double mx = logits.maxCoeff();
  double lse = std::log((logits.array() - mx).exp().sum()) + mx;
  return logits.array() - lse;
}

// Hidden states h0..h_L for one string; column t holds the state after
// consuming t symbols.
Eigen::MatrixXd hidden_states(const RnnLm& lm, const std::vector<int>& symbols) {
  const int len = static_cast<int>(symbols.size());
  Eigen::MatrixXd h(lm.hidden_size, len + 1);
  h.col(0) = lm.h0;
  for (int t = 1; t <= len; ++t) {
    int y = symbols[t - 1];
    if (y < 0 || y >= lm.alphabet_size)
      fail(ErrorCode::invalid_argument, "symbol id out of range for the model");
    Eigen::VectorXd a = lm.w * h.col(t - 1) + lm.u * lm.embed.row(y).transpose() + lm.b;
    h.col(t) = a.array().tanh();
  }
  if (!h.allFinite()) fail(ErrorCode::numeric, "non-finite activations in forward pass");
  return h;
}

int steps_for(const StringRecord& rec) {
  return rec.length() + (rec.truncated ? 0 : 1);
}

}  // namespace

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["seed"] = c.seed;
  if (c.grad_clip) j["grad_clip"] = *c.grad_clip;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("train config parse error: ") + e.what());
  }
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("grad_clip") && !j["grad_clip"].is_null())
    c.grad_clip = j["grad_clip"].get<double>();
  if (c.epochs < 1 || c.batch_size < 1 || c.lr <= 0 || c.adam_beta1 <= 0 ||
      c.adam_beta2 <= 0 || c.adam_eps <= 0)
    fail(ErrorCode::validation, "train config hyperparameters must be positive");
  return c;
}

Gradients Gradients::zeros_like(const RnnLm& lm) {
  Gradients g;
  g.embed = Eigen::MatrixXd::Zero(lm.embed.rows(), lm.embed.cols());
  g.w = Eigen::MatrixXd::Zero(lm.w.rows(), lm.w.cols());
  g.u = Eigen::MatrixXd::Zero(lm.u.rows(), lm.u.cols());
  g.e_out = Eigen::MatrixXd::Zero(lm.e_out.rows(), lm.e_out.cols());
  g.b = Eigen::VectorXd::Zero(lm.b.size());
  g.h0 = Eigen::VectorXd::Zero(lm.h0.size());
  return g;
}

double Gradients::squared_norm() const {
  return embed.squaredNorm() + w.squaredNorm() + u.squaredNorm() + e_out.squaredNorm() +
         b.squaredNorm() + h0.squaredNorm();
}

void Gradients::scale(double s) {
  embed *= s;
  w *= s;
  u *= s;
  e_out *= s;
  b *= s;
  h0 *= s;
}

AdamState AdamState::zeros_like(const RnnLm& lm) {
  AdamState st;
  st.m = Gradients::zeros_like(lm);
  st.v = Gradients::zeros_like(lm);
  st.step = 0;
  return st;
}

RnnLm init_model(int hidden_size, int alphabet_size, std::uint64_t seed) {
  if (hidden_size < 1 || alphabet_size < 1)
    fail(ErrorCode::invalid_argument, "model sizes must be >= 1");
  RnnLm lm;
  lm.hidden_size = hidden_size;
  lm.alphabet_size = alphabet_size;
  lm.embed.resize(alphabet_size, hidden_size);
  lm.w.resize(hidden_size, hidden_size);
  lm.u.resize(hidden_size, hidden_size);
  lm.e_out.resize(alphabet_size + 1, hidden_size);
  lm.b.resize(hidden_size);
  lm.h0 = Eigen::VectorXd::Zero(hidden_size);
  StreamRng rng(seed, "rnn-init");
  fill_gaussian(lm.embed, rng, kInitStd);
  fill_gaussian(lm.w, rng, kInitStd);
  fill_gaussian(lm.u, rng, kInitStd);
  fill_gaussian(lm.b, rng, kInitStd);
  fill_gaussian(lm.e_out, rng, kInitStd);
  return lm;
}

Eigen::MatrixXd forward(const RnnLm& lm, const std::vector<int>& symbols) {
  Eigen::MatrixXd h = hidden_states(lm, symbols);
  const int steps = static_cast<int>(symbols.size()) + 1;
  Eigen::MatrixXd out(steps, lm.num_outcomes());
  for (int t = 0; t < steps; ++t)
    out.row(t) = log_softmax_vec(lm.e_out * h.col(t)).transpose();
  return out;
}

double nll(const RnnLm& lm, const std::vector<StringRecord>& batch) {
  if (batch.empty()) fail(ErrorCode::invalid_argument, "nll: empty batch");
  double total = 0.0;
  long total_steps = 0;
  for (const auto& rec : batch) {
    const int steps = steps_for(rec);
    if (steps == 0) continue;
    Eigen::MatrixXd h = hidden_states(lm, rec.symbols);
    for (int t = 0; t < steps; ++t) {
      int target = (t < rec.length()) ? rec.symbols[t] : lm.alphabet_size;
      total -= log_softmax_vec(lm.e_out * h.col(t))[target];
    }
    total_steps += steps;
  }
  if (total_steps == 0) fail(ErrorCode::invalid_argument, "nll: batch has no token steps");
  return total / static_cast<double>(total_steps);
}

Gradients gradients(const RnnLm& lm, const std::vector<StringRecord>& batch) {
  if (batch.empty()) fail(ErrorCode::invalid_argument, "gradients: empty batch");
  long total_steps = 0;
  for (const auto& rec : batch) total_steps += steps_for(rec);
  if (total_steps == 0)
    fail(ErrorCode::invalid_argument, "gradients: batch has no token steps");
  const double scale = 1.0 / static_cast<double>(total_steps);

  Gradients g = Gradients::zeros_like(lm);
  for (const auto& rec : batch) {
    const int len = rec.length();
    const int steps = steps_for(rec);
    if (steps == 0) continue;
    Eigen::MatrixXd h = hidden_states(lm, rec.symbols);
    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(lm.hidden_size, len + 1);

    for (int t = 0; t < steps; ++t) {
      int target = (t < len) ? rec.symbols[t] : lm.alphabet_size;
      Eigen::VectorXd p = log_softmax_vec(lm.e_out * h.col(t)).array().exp();
      p[target] -= 1.0;
      p *= scale;  // d(mean nll)/dlogits
      g.e_out.noalias() += p * h.col(t).transpose();
      dh.col(t).noalias() += lm.e_out.transpose() * p;
    }

    for (int t = len; t >= 1; --t) {
      Eigen::VectorXd da =
          dh.col(t).cwiseProduct((1.0 - h.col(t).array().square()).matrix());
      g.w.noalias() += da * h.col(t - 1).transpose();
      g.u.noalias() += da * lm.embed.row(rec.symbols[t - 1]);
      g.b += da;
      g.embed.row(rec.symbols[t - 1]).noalias() += (lm.u.transpose() * da).transpose();
      dh.col(t - 1).noalias() += lm.w.transpose() * da;
    }
    g.h0 += dh.col(0);
  }
  return g;
}

void adam_step(RnnLm& lm, AdamState& state, const Gradients& grads, const TrainConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = (cfg.adam_beta2 * v.array() + (1.0 - cfg.adam_beta2) * g.array().square()).matrix();
    theta -= (cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps)).matrix();
  };
  update(lm.embed, grads.embed, state.m.embed, state.v.embed);
  update(lm.w, grads.w, state.m.w, state.v.w);
  update(lm.u, grads.u, state.m.u, state.v.u);
  update(lm.e_out, grads.e_out, state.m.e_out, state.v.e_out);
  update(lm.b, grads.b, state.m.b, state.v.b);
  update(lm.h0, grads.h0, state.m.h0, state.v.h0);
}

TrainResult train(const Dataset& dataset, int hidden_size, const TrainConfig& cfg) {
  if (dataset.train.empty()) fail(ErrorCode::invalid_argument, "train: empty train split");
  int alphabet_size = dataset.alphabet_size;
  if (alphabet_size <= 0) {
    alphabet_size = 1;
    for (const auto& rec : dataset.train)
      for (int y : rec.symbols) alphabet_size = std::max(alphabet_size, y + 1);
    for (const auto& rec : dataset.test)
      for (int y : rec.symbols) alphabet_size = std::max(alphabet_size, y + 1);
  }

  TrainResult result;
  result.model = init_model(hidden_size, alphabet_size, cfg.seed);
  AdamState adam = AdamState::zeros_like(result.model);

  const int n = static_cast<int>(dataset.train.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    StreamRng shuffle_rng(cfg.seed, "shuffle", {static_cast<std::uint64_t>(epoch)});
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    long epoch_steps = 0;
    int batch_index = 0;
    for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      int end = std::min(n, start + cfg.batch_size);
      std::vector<StringRecord> batch;
      batch.reserve(end - start);
      long batch_steps = 0;
      for (int i = start; i < end; ++i) {
        batch.push_back(dataset.train[order[i]]);
        batch_steps += steps_for(batch.back());
      }
      if (batch_steps == 0) continue;

      double batch_nll;
      Gradients g = Gradients::zeros_like(result.model);
      try {
        batch_nll = nll(result.model, batch);
        g = gradients(result.model, batch);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::numeric)
          fail(ErrorCode::training_diverged,
               "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                   std::to_string(batch_index) + ": " + e.what());
        throw;
      }
      if (!std::isfinite(batch_nll))
        fail(ErrorCode::training_diverged,
             "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                 std::to_string(batch_index) + ": non-finite loss");

      if (cfg.grad_clip) {
        double norm = std::sqrt(g.squared_norm());
        if (norm > *cfg.grad_clip && norm > 0.0) g.scale(*cfg.grad_clip / norm);
      }
      adam_step(result.model, adam, g, cfg);

      epoch_loss += batch_nll * static_cast<double>(batch_steps);
      epoch_steps += batch_steps;
    }
    result.epoch_mean_nll.push_back(epoch_loss / static_cast<double>(epoch_steps));
  }
  return result;
}

std::vector<StringScore> score(const RnnLm& lm, const std::vector<StringRecord>& strings) {
  std::vector<StringScore> out;
  out.reserve(strings.size());
  for (int i = 0; i < static_cast<int>(strings.size()); ++i) {
    const auto& rec = strings[i];
    StringScore s;
    s.string_index = i;
    Eigen::MatrixXd logp = forward(lm, rec.symbols);
    const int steps = steps_for(rec);
    s.per_token_logprobs_nats.reserve(steps);
    for (int t = 0; t < steps; ++t) {
      int target = (t < rec.length()) ? rec.symbols[t] : lm.alphabet_size;
      double lp = logp(t, target);
      s.per_token_logprobs_nats.push_back(lp);
      s.total_logprob_nats += lp;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string model_to_json(const RnnLm& lm) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["hidden_size"] = lm.hidden_size;
  j["alphabet_size"] = lm.alphabet_size;
  auto tensor = [](const Eigen::MatrixXd& m) {
    nlohmann::json t;
    t["shape"] = {m.rows(), m.cols()};
    std::vector<double> data;
    data.reserve(m.size());
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    t["data"] = std::move(data);
    return t;
  };
  auto vec = [](const Eigen::VectorXd& v) {
    nlohmann::json t;
    t["shape"] = {v.size()};
    t["data"] = std::vector<double>(v.data(), v.data() + v.size());
    return t;
  };
  j["tensors"]["embed"] = tensor(lm.embed);
  j["tensors"]["W"] = tensor(lm.w);
  j["tensors"]["U"] = tensor(lm.u);
  j["tensors"]["E"] = tensor(lm.e_out);
  j["tensors"]["b"] = vec(lm.b);
  j["tensors"]["h0"] = vec(lm.h0);
  return j.dump() + "\n";
}

RnnLm model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("model parse error: ") + e.what());
  }
  if (j.value("format_version", 0) != 1)
    fail(ErrorCode::parse, "unsupported model format_version");
  RnnLm lm;
  try {
    lm.hidden_size = j.at("hidden_size").get<int>();
    lm.alphabet_size = j.at("alphabet_size").get<int>();
    auto tensor = [&j](const char* name, Eigen::Index rows, Eigen::Index cols) {
      const auto& t = j.at("tensors").at(name);
      const auto& shape = t.at("shape");
      if (shape.size() != 2 || shape[0].get<Eigen::Index>() != rows ||
          shape[1].get<Eigen::Index>() != cols)
        fail(ErrorCode::parse, std::string("tensor shape mismatch: ") + name);
      auto data = t.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        fail(ErrorCode::parse, std::string("tensor data size mismatch: ") + name);
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r * cols + c];
      return m;
    };
    auto vec = [&j](const char* name, Eigen::Index size) {
      const auto& t = j.at("tensors").at(name);
      auto data = t.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != size)
        fail(ErrorCode::parse, std::string("vector size mismatch: ") + name);
      return Eigen::Map<Eigen::VectorXd>(data.data(), size).eval();
    };
    const int d = lm.hidden_size;
    lm.embed = tensor("embed", lm.alphabet_size, d);
    lm.w = tensor("W", d, d);
    lm.u = tensor("U", d, d);
    lm.e_out = tensor("E", lm.alphabet_size + 1, d);
    lm.b = vec("b", d);
    lm.h0 = vec("h0", d);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("model field error: ") + e.what());
  }
  return lm;
}

void save_model(const RnnLm& lm, const std::string& path) {
  write_file(path, model_to_json(lm));
}

RnnLm load_model(const std::string& path) { return model_from_json(read_file(path)); }

}  // namespace rlmlab
