#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "analysis.hpp"
#include "errors.hpp"
#include "util.hpp"

namespace fs = std::filesystem;

namespace rlmlab {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void run_parallel(int parallelism, int n, const std::function<void(int)>& fn) {
  if (parallelism <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  int threads = std::min(parallelism, n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

nlohmann::json set_to_json(const std::set<int>& s) {
  return nlohmann::json(std::vector<int>(s.begin(), s.end()));
}

std::set<int> set_from_json(const nlohmann::json& j) {
  std::set<int> out;
  for (const auto& v : j) out.insert(v.get<int>());
  return out;
}

std::uint64_t dataset_seed_for(const ExperimentConfig& cfg, const MemberRecord& m) {
  return derive_key(cfg.generation.master_seed, "dataset",
                    {static_cast<std::uint64_t>(m.num_states),
                     static_cast<std::uint64_t>(m.alphabet_size), m.replicate,
                     static_cast<std::uint64_t>(m.rank)});
}

std::uint64_t train_seed_for(const ExperimentConfig& cfg, const MemberRecord& m, int d) {
  return derive_key(cfg.generation.master_seed, "train",
                    {static_cast<std::uint64_t>(m.num_states),
                     static_cast<std::uint64_t>(m.alphabet_size), m.replicate,
                     static_cast<std::uint64_t>(m.rank), static_cast<std::uint64_t>(d)});
}

}  // namespace

ExperimentConfig ExperimentConfig::desk_default() {
  ExperimentConfig c;
  c.generation.state_sizes = {4, 8};
  c.generation.alphabet_sizes = {4, 8};
  c.d_grid = {2, 8, 16};
  c.replicates = 3;
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["generation"] = nlohmann::json::parse(generation_config_to_json(c.generation));
  j["dataset"]["size"] = c.dataset.size;
  j["dataset"]["max_len"] = c.dataset.max_len;
  j["dataset"]["min_test"] = c.dataset.min_test;
  j["train"] = nlohmann::json::parse(train_config_to_json(c.train));
  j["d_grid"] = set_to_json(c.d_grid);
  j["replicates"] = c.replicates;
  j["output_dir"] = c.output_dir;
  j["parallelism"] = c.parallelism;
  return j.dump(2) + "\n";
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("experiment config parse error: ") + e.what());
  }
  ExperimentConfig c;
  if (j.contains("generation"))
    c.generation = generation_config_from_json(j["generation"].dump());
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    c.dataset.size = d.value("size", c.dataset.size);
    c.dataset.max_len = d.value("max_len", c.dataset.max_len);
    c.dataset.min_test = d.value("min_test", c.dataset.min_test);
  }
  if (j.contains("train")) c.train = train_config_from_json(j["train"].dump());
  if (j.contains("d_grid")) c.d_grid = set_from_json(j["d_grid"]);
  if (j.contains("replicates")) c.replicates = j["replicates"].get<int>();
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("parallelism")) c.parallelism = j["parallelism"].get<int>();
  if (c.d_grid.empty()) fail(ErrorCode::validation, "d_grid must be non-empty");
  for (int d : c.d_grid)
    if (d < 1) fail(ErrorCode::validation, "hidden sizes must be >= 1");
  if (c.replicates < 1) fail(ErrorCode::validation, "replicates must be >= 1");
  if (c.dataset.size <= c.dataset.min_test)
    fail(ErrorCode::validation, "dataset size must exceed min_test");
  if (c.parallelism < 1) c.parallelism = 1;
  return c;
}

std::string manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["tool_version"] = m.tool_version;
  j["rng_algorithm"] = m.rng_algorithm;
  j["config_hash"] = m.config_hash;
  j["config"] = nlohmann::json::parse(experiment_config_to_json(m.config));

  nlohmann::json members = nlohmann::json::array();
  for (const auto& mem : m.members) {
    nlohmann::json mj;
    mj["family_id"] = mem.family_id;
    mj["automaton_id"] = mem.automaton_id;
    mj["num_states"] = mem.num_states;
    mj["alphabet_size"] = mem.alphabet_size;
    mj["replicate"] = mem.replicate;
    mj["rank"] = mem.rank;
    mj["expected_length"] = mem.expected_length;
    mj["entropy_bits"] = mem.entropy_bits;
    mj["automaton_path"] = mem.automaton_path;
    mj["automaton_hash"] = mem.automaton_hash;
    mj["dataset_path"] = mem.dataset_path;
    mj["dataset_hash"] = mem.dataset_hash;
    mj["status"] = mem.status;
    if (!mem.error.empty()) mj["error"] = mem.error;
    members.push_back(std::move(mj));
  }
  j["members"] = std::move(members);

  nlohmann::json cells = nlohmann::json::array();
  nlohmann::json timing = nlohmann::json::object();
  for (const auto& cell : m.cells) {
    nlohmann::json cj;
    cj["automaton_id"] = cell.automaton_id;
    cj["model_id"] = cell.model_id;
    cj["d"] = cell.d;
    cj["model_path"] = cell.model_path;
    cj["model_hash"] = cell.model_hash;
    cj["scores_path"] = cell.scores_path;
    cj["scores_hash"] = cell.scores_hash;
    cj["status"] = cell.status;
    if (!cell.error.empty()) cj["error"] = cell.error;
    if (cell.status == "ok") cj["kl"] = nlohmann::json::parse(kl_estimate_to_json(cell.kl));
    cells.push_back(std::move(cj));
    timing[cell.model_id] = cell.wall_ms;
  }
  j["cells"] = std::move(cells);
  // Wall-clock lives in its own section; determinism checks exclude it.
  j["timing"]["cells"] = std::move(timing);
  j["timing"]["total_ms"] = m.total_wall_ms;
  return j.dump(2) + "\n";
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  auto run_start = Clock::now();
  if (config.output_dir.empty())
    fail(ErrorCode::invalid_argument, "experiment config needs an output_dir");
  fs::create_directories(config.output_dir);
  fs::create_directories(fs::path(config.output_dir) / "families");

  Manifest manifest;
  manifest.tool_version = kToolVersion;
  manifest.rng_algorithm = kRngAlgorithm;
  manifest.config = config;
  {
    ExperimentConfig hashed = config;
    hashed.output_dir.clear();  // relocatable runs hash identically
    hashed.parallelism = 1;
    manifest.config_hash = hex64(fnv1a64(experiment_config_to_json(hashed)));
  }

  // Enumerate members: every (|Q|, |Sigma|, replicate, rank) kept by the
  // length filter. Families are deterministic given the config, so they are
  // regenerated in memory and files are written only when missing.
  struct FamilyKey {
    int q, s;
    std::uint64_t rep;
  };
  std::vector<FamilyKey> fams;
  for (int q : config.generation.state_sizes)
    for (int s : config.generation.alphabet_sizes)
      for (int rep = 0; rep < config.replicates; ++rep)
        fams.push_back({q, s, static_cast<std::uint64_t>(rep)});

  std::vector<std::vector<MemberRecord>> member_slots(fams.size());
  const std::string fam_dir = (fs::path(config.output_dir) / "families").string();
  run_parallel(config.parallelism, static_cast<int>(fams.size()), [&](int i) {
    const auto& key = fams[i];
    StreamRng topo_rng(config.generation.master_seed, "topology",
                       {static_cast<std::uint64_t>(key.q),
                        static_cast<std::uint64_t>(key.s), key.rep});
    StreamRng logit_rng(config.generation.master_seed, "logits",
                        {static_cast<std::uint64_t>(key.q),
                         static_cast<std::uint64_t>(key.s), key.rep});
    Eigen::MatrixXi topo = sample_topology(topo_rng, key.q, key.s);
    Eigen::MatrixXd t = sample_logits(logit_rng, key.s, key.q, config.generation.logit_std);
    std::string family_id = "q" + std::to_string(key.q) + "_s" + std::to_string(key.s) +
                            "_rep" + std::to_string(key.rep);
    for (const Dpfsa& a : build_family(topo, t, config.generation)) {
      MemberRecord mem;
      mem.family_id = family_id;
      mem.automaton_id = family_id + "_r" + std::to_string(a.declared_rank);
      mem.num_states = key.q;
      mem.alphabet_size = key.s;
      mem.replicate = key.rep;
      mem.rank = a.declared_rank;
      try {
        AnalysisReport rep = analyze(a);
        mem.expected_length = rep.expected_length;
        mem.entropy_bits = rep.entropy_bits;
        if (rep.expected_length > config.generation.length_filter_threshold) {
          mem.status = "filtered";
          member_slots[i].push_back(std::move(mem));
          continue;
        }
        mem.automaton_path = (fs::path(fam_dir) / (mem.automaton_id + ".json")).string();
        if (!fs::exists(mem.automaton_path)) save_dpfsa(a, mem.automaton_path);
        mem.automaton_hash = hex64(hash_file(mem.automaton_path));

        mem.dataset_path =
            (fs::path(fam_dir) / (mem.automaton_id + ".corpus.jsonl")).string();
        if (!fs::exists(mem.dataset_path)) {
          Dataset ds = build_dataset(a, dataset_seed_for(config, mem), config.dataset.size,
                                     config.dataset.max_len, config.dataset.min_test,
                                     mem.automaton_id);
          save_dataset(ds, mem.dataset_path);
        }
        mem.dataset_hash = hex64(hash_file(mem.dataset_path));
        mem.status = "ok";
      } catch (const Error& e) {
        mem.status = "failed";
        mem.error = e.what();
      }
      member_slots[i].push_back(std::move(mem));
    }
  });
  for (auto& slot : member_slots)
    for (auto& mem : slot) manifest.members.push_back(std::move(mem));

  // Model cells: one per retained member and hidden size.
  struct CellKey {
    const MemberRecord* member;
    int d;
  };
  std::vector<CellKey> cells;
  for (const auto& mem : manifest.members) {
    if (mem.status != "ok") continue;
    for (int d : config.d_grid) cells.push_back({&mem, d});
  }
  std::vector<CellRecord> cell_slots(cells.size());
  run_parallel(config.parallelism, static_cast<int>(cells.size()), [&](int i) {
    auto cell_start = Clock::now();
    const MemberRecord& mem = *cells[i].member;
    const int d = cells[i].d;
    CellRecord rec;
    rec.automaton_id = mem.automaton_id;
    rec.d = d;
    rec.model_id = mem.automaton_id + "_d" + std::to_string(d);
    rec.model_path = (fs::path(fam_dir) / (rec.model_id + ".model.json")).string();
    rec.scores_path = (fs::path(fam_dir) / (rec.model_id + ".scores.jsonl")).string();
    try {
      Dpfsa a = load_dpfsa(mem.automaton_path);
      Dataset ds = load_dataset(mem.dataset_path);
      if (!fs::exists(rec.scores_path)) {
        RnnLm model;
        if (fs::exists(rec.model_path)) {
          model = load_model(rec.model_path);
        } else {
          TrainConfig tc = config.train;
          tc.seed = train_seed_for(config, mem, d);
          model = train(ds, d, tc).model;
          save_model(model, rec.model_path);
        }
        ScoreFile sf;
        sf.model_id = rec.model_id;
        sf.automaton_id = mem.automaton_id;
        for (auto& s : score(model, ds.test)) {
          ScoreRecord sr;
          sr.string_index = s.string_index;
          sr.total_logprob_nats = s.total_logprob_nats;
          sr.per_token_logprobs_nats = std::move(s.per_token_logprobs_nats);
          sf.records.push_back(std::move(sr));
        }
        write_scores(sf, rec.scores_path);
      }
      rec.model_hash = fs::exists(rec.model_path) ? hex64(hash_file(rec.model_path)) : "";
      rec.scores_hash = hex64(hash_file(rec.scores_path));
      ScoreFile sf = ingest_external_scores(rec.scores_path);
      rec.kl = kl_estimate(a, sf, ds);
      rec.status = "ok";
    } catch (const Error& e) {
      rec.status = "failed";
      rec.error = e.what();
    }
    rec.wall_ms = ms_since(cell_start);
    cell_slots[i] = std::move(rec);
  });
  manifest.cells = std::move(cell_slots);

  // Canonical order keeps manifest and results bytes independent of
  // scheduling.
  std::sort(manifest.members.begin(), manifest.members.end(),
            [](const MemberRecord& a, const MemberRecord& b) {
              return std::tie(a.num_states, a.alphabet_size, a.replicate, a.rank) <
                     std::tie(b.num_states, b.alphabet_size, b.replicate, b.rank);
            });
  std::map<std::string, const MemberRecord*> member_by_id;
  for (const auto& mem : manifest.members) member_by_id[mem.automaton_id] = &mem;
  std::sort(manifest.cells.begin(), manifest.cells.end(),
            [&](const CellRecord& a, const CellRecord& b) {
              const MemberRecord* ma = member_by_id[a.automaton_id];
              const MemberRecord* mb = member_by_id[b.automaton_id];
              return std::tie(ma->num_states, ma->alphabet_size, ma->replicate, ma->rank,
                              a.d) < std::tie(mb->num_states, mb->alphabet_size,
                                              mb->replicate, mb->rank, b.d);
            });

  // Results rows carry predictors recomputed from the automaton files at
  // write time.
  ExperimentResult result;
  std::vector<EvalRecordRow> rows;
  for (const auto& cell : manifest.cells) {
    if (cell.status != "ok") {
      ++result.cells_failed;
      continue;
    }
    ++result.cells_ok;
    const MemberRecord& mem = *member_by_id[cell.automaton_id];
    Dpfsa a = load_dpfsa(mem.automaton_path);
    AnalysisReport rep = analyze(a);
    EvalRecordRow row;
    row.automaton_id = cell.automaton_id;
    row.model_id = cell.model_id;
    row.d = cell.d;
    row.num_states = a.num_states;
    row.alphabet_size = a.alphabet.size;
    row.rank = a.declared_rank;
    row.exp_len = rep.expected_length;
    row.h_bits = rep.entropy_bits;
    row.kl_bits = cell.kl.kl_bits;
    row.kl_stderr_bits = cell.kl.stderr_bits;
    rows.push_back(std::move(row));
  }

  manifest.total_wall_ms = ms_since(run_start);
  result.results_tsv_path = (fs::path(config.output_dir) / "results.tsv").string();
  write_file(result.results_tsv_path, results_to_tsv(rows));
  result.manifest_path = (fs::path(config.output_dir) / "manifest.json").string();
  write_file(result.manifest_path, manifest_to_json(manifest));
  result.manifest = std::move(manifest);
  return result;
}

std::string export_plot(const std::string& results_tsv_text, const std::string& row_column,
                        const std::string& col_column, const std::string& value_column) {
  std::istringstream in(results_tsv_text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::parse, "results TSV is empty");
  auto header = split(line, '\t');
  auto col_of = [&header](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    fail(ErrorCode::invalid_argument, "unknown column name: " + name);
  };
  const int ri = col_of(row_column);
  const int ci = col_of(col_column);
  const int vi = col_of(value_column);

  // Keys sort numerically when they parse as numbers.
  auto key_less = [](const std::string& a, const std::string& b) {
    try {
      std::size_t pa = 0, pb = 0;
      double da = std::stod(a, &pa);
      double db = std::stod(b, &pb);
      if (pa == a.size() && pb == b.size()) return da < db;
    } catch (const std::exception&) {
    }
    return a < b;
  };
  std::map<std::string, std::map<std::string, std::pair<double, int>,
                                 decltype(key_less)>,
           decltype(key_less)>
      grid(key_less);
  std::set<std::string, decltype(key_less)> col_keys(key_less);

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (static_cast<int>(f.size()) <= std::max({ri, ci, vi}))
      fail(ErrorCode::parse, "short row at line " + std::to_string(lineno));
    double v;
    try {
      v = std::stod(f[vi]);
    } catch (const std::exception&) {
      fail(ErrorCode::parse, "non-numeric value at line " + std::to_string(lineno));
    }
    auto it = grid.try_emplace(f[ri], key_less).first;
    auto& cellv = it->second.try_emplace(f[ci], std::make_pair(0.0, 0)).first->second;
    cellv.first += v;
    cellv.second += 1;
    col_keys.insert(f[ci]);
  }

  std::ostringstream out;
  out << row_column << "\\" << col_column;
  for (const auto& ck : col_keys) out << "\t" << ck;
  out << "\n";
  for (const auto& [rk, cols] : grid) {
    out << rk;
    for (const auto& ck : col_keys) {
      auto it = cols.find(ck);
      if (it == cols.end() || it->second.second == 0) out << "\tNA";
      else out << "\t" << fmt_double(it->second.first / it->second.second);
    }
    out << "\n";
  }
  out << "\n# counts\n";
  out << row_column << "\\" << col_column;
  for (const auto& ck : col_keys) out << "\t" << ck;
  out << "\n";
  for (const auto& [rk, cols] : grid) {
    out << rk;
    for (const auto& ck : col_keys) {
      auto it = cols.find(ck);
      out << "\t" << (it == cols.end() ? 0 : it->second.second);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace rlmlab
