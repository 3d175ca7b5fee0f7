#include "generation.hpp"

#include <algorithm>
#include <filesystem>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "analysis.hpp"
#include "errors.hpp"
#include "util.hpp"

namespace rlmlab {

namespace {

nlohmann::json set_to_json(const std::set<int>& s) {
  return nlohmann::json(std::vector<int>(s.begin(), s.end()));
}

std::set<int> set_from_json(const nlohmann::json& j) {
  std::set<int> out;
  for (const auto& v : j) out.insert(v.get<int>());
  return out;
}

}  // namespace

std::string generation_config_to_json(const GenerationConfig& c) {
  nlohmann::json j;
  j["state_sizes"] = set_to_json(c.state_sizes);
  j["alphabet_sizes"] = set_to_json(c.alphabet_sizes);
  j["rank_grid"] = set_to_json(c.rank_grid);
  j["logit_std"] = c.logit_std;
  j["length_filter_threshold"] = c.length_filter_threshold;
  j["master_seed"] = c.master_seed;
  return j.dump();
}

GenerationConfig generation_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("generation config parse error: ") + e.what());
  }
  GenerationConfig c;
  if (j.contains("state_sizes")) c.state_sizes = set_from_json(j["state_sizes"]);
  if (j.contains("alphabet_sizes")) c.alphabet_sizes = set_from_json(j["alphabet_sizes"]);
  if (j.contains("rank_grid")) c.rank_grid = set_from_json(j["rank_grid"]);
  if (j.contains("logit_std")) c.logit_std = j["logit_std"].get<double>();
  if (j.contains("length_filter_threshold"))
    c.length_filter_threshold = j["length_filter_threshold"].get<double>();
  if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
  for (int v : c.state_sizes)
    if (v < 1) fail(ErrorCode::validation, "state sizes must be >= 1");
  for (int v : c.alphabet_sizes)
    if (v < 1) fail(ErrorCode::validation, "alphabet sizes must be >= 1");
  for (int v : c.rank_grid)
    if (v < 1) fail(ErrorCode::validation, "ranks must be >= 1");
  if (c.logit_std <= 0) fail(ErrorCode::validation, "logit_std must be positive");
  if (c.length_filter_threshold <= 0)
    fail(ErrorCode::validation, "length_filter_threshold must be positive");
  return c;
}

Eigen::MatrixXi sample_topology(StreamRng& rng, int num_states, int alphabet_size) {
  if (num_states < 1 || alphabet_size < 1)
    fail(ErrorCode::invalid_argument, "sample_topology sizes must be >= 1");
  Eigen::MatrixXi topo(num_states, alphabet_size);
  for (int q = 0; q < num_states; ++q)
    for (int y = 0; y < alphabet_size; ++y)
      topo(q, y) = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(num_states)));
  return topo;
}

Eigen::MatrixXd sample_logits(StreamRng& rng, int alphabet_size, int num_states,
                              double logit_std) {
  if (num_states < 1 || alphabet_size < 1)
    fail(ErrorCode::invalid_argument, "sample_logits sizes must be >= 1");
  Eigen::MatrixXd t(alphabet_size + 1, num_states);
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < t.cols(); ++c) t(r, c) = rng.gaussian(0.0, logit_std);
  return t;
}

Eigen::MatrixXd rank_truncate(const Eigen::MatrixXd& t, int r) {
  const int max_rank = static_cast<int>(std::min(t.rows(), t.cols()));
  if (r < 1 || r > max_rank)
    fail(ErrorCode::invalid_argument,
         "rank_truncate: R must lie in [1, min(rows, cols)], got " + std::to_string(r));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd u = svd.matrixU();
  Eigen::MatrixXd v = svd.matrixV();
  const auto& sv = svd.singularValues();
  // Sign convention: largest-magnitude entry of each left singular vector is
  // positive (flips applied to u and v in pairs).
  for (int i = 0; i < u.cols(); ++i) {
    int arg = 0;
    for (int j = 1; j < u.rows(); ++j)
      if (std::abs(u(j, i)) > std::abs(u(arg, i))) arg = j;
    if (u(arg, i) < 0.0) {
      u.col(i) = -u.col(i);
      v.col(i) = -v.col(i);
    }
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t.rows(), t.cols());
  for (int i = 0; i < r; ++i) out += sv[i] * u.col(i) * v.col(i).transpose();
  return out;
}

std::vector<Dpfsa> build_family(const Eigen::MatrixXi& topology, const Eigen::MatrixXd& t,
                                const GenerationConfig& config) {
  const int num_states = static_cast<int>(topology.rows());
  const int alphabet_size = static_cast<int>(topology.cols());
  if (t.rows() != alphabet_size + 1 || t.cols() != num_states)
    fail(ErrorCode::invalid_argument, "build_family: logit matrix shape mismatch");
  const int bound = std::min(num_states, alphabet_size + 1);
  std::vector<Dpfsa> family;
  for (int r : config.rank_grid) {
    if (r > bound) continue;
    Dpfsa a;
    a.num_states = num_states;
    a.alphabet.size = alphabet_size;
    a.initial_state = 0;
    a.topology = topology;
    a.logits = rank_truncate(t, r);
    a.declared_rank = r;
    a.param_mode = ParamMode::softmax_logits;
    family.push_back(std::move(a));
  }
  return family;
}

std::vector<Dpfsa> filter_by_expected_length(const std::vector<Dpfsa>& automata,
                                             double threshold) {
  std::vector<Dpfsa> kept;
  for (const auto& a : automata)
    if (expected_length(a) <= threshold) kept.push_back(a);
  return kept;
}

FamilyManifest generate_family_files(const GenerationConfig& config, int num_states,
                                     int alphabet_size, std::uint64_t family_index,
                                     const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  StreamRng topo_rng(config.master_seed, "topology",
                     {static_cast<std::uint64_t>(num_states),
                      static_cast<std::uint64_t>(alphabet_size), family_index});
  StreamRng logit_rng(config.master_seed, "logits",
                      {static_cast<std::uint64_t>(num_states),
                       static_cast<std::uint64_t>(alphabet_size), family_index});
  Eigen::MatrixXi topo = sample_topology(topo_rng, num_states, alphabet_size);
  Eigen::MatrixXd t = sample_logits(logit_rng, alphabet_size, num_states, config.logit_std);

  FamilyManifest m;
  m.config = config;
  m.num_states = num_states;
  m.alphabet_size = alphabet_size;
  m.family_index = family_index;
  m.family_id = "q" + std::to_string(num_states) + "_s" + std::to_string(alphabet_size) +
                "_rep" + std::to_string(family_index);

  for (const Dpfsa& a : build_family(topo, t, config)) {
    FamilyMember member;
    member.automaton_id = m.family_id + "_r" + std::to_string(a.declared_rank);
    member.declared_rank = a.declared_rank;
    AnalysisReport rep = analyze(a);
    member.expected_length = rep.expected_length;
    member.entropy_bits = rep.entropy_bits;
    member.retained = rep.expected_length <= config.length_filter_threshold;
    if (member.retained) {
      member.path = (fs::path(out_dir) / (member.automaton_id + ".json")).string();
      save_dpfsa(a, member.path);
    }
    m.members.push_back(std::move(member));
  }

  write_file((fs::path(out_dir) / (m.family_id + ".family.json")).string(),
             family_manifest_to_json(m));
  return m;
}

std::string family_manifest_to_json(const FamilyManifest& m) {
  nlohmann::json j;
  j["family_id"] = m.family_id;
  j["config"] = nlohmann::json::parse(generation_config_to_json(m.config));
  j["num_states"] = m.num_states;
  j["alphabet_size"] = m.alphabet_size;
  j["family_index"] = m.family_index;
  nlohmann::json members = nlohmann::json::array();
  for (const auto& mem : m.members) {
    nlohmann::json mj;
    mj["automaton_id"] = mem.automaton_id;
    mj["path"] = mem.path;
    mj["declared_rank"] = mem.declared_rank;
    mj["expected_length"] = mem.expected_length;
    mj["entropy_bits"] = mem.entropy_bits;
    mj["retained"] = mem.retained;
    members.push_back(std::move(mj));
  }
  j["members"] = std::move(members);
  return j.dump(2) + "\n";
}

FamilyManifest family_manifest_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("family manifest parse error: ") + e.what());
  }
  FamilyManifest m;
  m.family_id = j.at("family_id").get<std::string>();
  m.config = generation_config_from_json(j.at("config").dump());
  m.num_states = j.at("num_states").get<int>();
  m.alphabet_size = j.at("alphabet_size").get<int>();
  m.family_index = j.at("family_index").get<std::uint64_t>();
  for (const auto& mj : j.at("members")) {
    FamilyMember mem;
    mem.automaton_id = mj.at("automaton_id").get<std::string>();
    mem.path = mj.at("path").get<std::string>();
    mem.declared_rank = mj.at("declared_rank").get<int>();
    mem.expected_length = mj.at("expected_length").get<double>();
    mem.entropy_bits = mj.at("entropy_bits").get<double>();
    mem.retained = mj.at("retained").get<bool>();
    m.members.push_back(std::move(mem));
  }
  return m;
}

}  // namespace rlmlab
