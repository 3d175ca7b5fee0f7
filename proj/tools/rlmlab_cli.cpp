// Command-line front end over the rlmlab shared library. Usage errors exit 2;
// validation/runtime errors exit 1 with a machine-readable JSON object on
// stderr.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rlmlab.h"

namespace {

struct CliFailure {
  rlm_status status;
  std::string message;
};

void check(rlm_status st) {
  if (st != RLM_OK) throw CliFailure{st, rlm_last_error()};
}

std::string take_string(char* s) {
  std::string out = s ? s : "";
  rlm_string_free(s);
  return out;
}

struct DpfsaHandle {
  rlm_dpfsa* p = nullptr;
  ~DpfsaHandle() { rlm_dpfsa_free(p); }
};

struct DatasetHandle {
  rlm_dataset* p = nullptr;
  ~DatasetHandle() { rlm_dataset_free(p); }
};

struct ModelHandle {
  rlm_model* p = nullptr;
  ~ModelHandle() { rlm_model_free(p); }
};

std::string default_out_dir() {
  const char* env = std::getenv("RLMLAB_OUT_DIR");
  return env ? env : "rlmlab_out";
}

nlohmann::json ranks_json(const std::vector<int>& ranks) {
  return nlohmann::json(ranks);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rlmlab — regular language model learnability lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rlm_version()));

  // generate
  auto* generate = app.add_subcommand(
      "generate", "Sample one rank family of automata sharing a topology");
  int gen_states = 8, gen_alphabet = 8;
  std::uint64_t gen_seed = 0, gen_replicate = 0;
  std::vector<int> gen_ranks;
  double gen_logit_std = 2.0, gen_threshold = 46.0;
  std::string gen_out_dir = default_out_dir();
  generate->add_option("--states", gen_states, "Number of states |Q|")->required();
  generate->add_option("--alphabet", gen_alphabet, "Alphabet size |Sigma|")->required();
  generate->add_option("--seed", gen_seed, "Master seed");
  generate->add_option("--replicate", gen_replicate, "Family replicate index");
  generate->add_option("--ranks", gen_ranks,
                       "Rank grid (default 1,2,4,6,8,10,12,16; clipped to the bound)");
  generate->add_option("--logit-std", gen_logit_std, "Logit stddev");
  generate->add_option("--length-threshold", gen_threshold,
                       "Expected-length filter threshold");
  generate->add_option("--out-dir", gen_out_dir, "Output directory");

  // sample
  auto* sample = app.add_subcommand("sample", "Sample a train/test corpus from an automaton");
  std::string smp_automaton, smp_out, smp_id;
  std::uint64_t smp_seed = 0;
  int smp_size = 20000, smp_max_len = 256, smp_min_test = 2000;
  sample->add_option("--automaton", smp_automaton, "Automaton JSON file")->required();
  sample->add_option("--out", smp_out, "Corpus JSONL output path")->required();
  sample->add_option("--seed", smp_seed, "Sampling seed");
  sample->add_option("--size", smp_size, "Total number of strings");
  sample->add_option("--max-len", smp_max_len, "Truncation length");
  sample->add_option("--min-test", smp_min_test, "Minimum test strings");
  sample->add_option("--id", smp_id, "Automaton id recorded in the corpus");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Exact entropy, expected length, ranks");
  std::string ana_automaton;
  bool ana_json = false;
  analyze->add_option("--automaton", ana_automaton, "Automaton JSON file")->required();
  analyze->add_flag("--json", ana_json, "Emit JSON instead of text");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a recurrent LM on a corpus");
  std::string trn_corpus, trn_out, trn_trace;
  int trn_d = 8, trn_epochs = 2, trn_batch = 32;
  double trn_lr = 0.001;
  std::uint64_t trn_seed = 0;
  std::optional<double> trn_clip;
  train_cmd->add_option("--corpus", trn_corpus, "Corpus JSONL file")->required();
  train_cmd->add_option("--out", trn_out, "Model checkpoint output path")->required();
  train_cmd->add_option("--d", trn_d, "Hidden size D")->required();
  train_cmd->add_option("--epochs", trn_epochs, "Training epochs");
  train_cmd->add_option("--batch-size", trn_batch, "Batch size");
  train_cmd->add_option("--lr", trn_lr, "Learning rate");
  train_cmd->add_option("--seed", trn_seed, "Training seed");
  train_cmd->add_option("--grad-clip", trn_clip, "Global gradient max-norm");
  train_cmd->add_option("--trace", trn_trace, "Write per-epoch loss trace JSON here");

  // score
  auto* score_cmd = app.add_subcommand("score", "Score test strings with a model");
  std::string sc_corpus, sc_model, sc_automaton, sc_out, sc_model_id, sc_automaton_id;
  score_cmd->add_option("--corpus", sc_corpus, "Corpus JSONL file")->required();
  score_cmd->add_option("--model", sc_model, "Model checkpoint to score with");
  score_cmd->add_option("--automaton", sc_automaton,
                        "Score with the automaton itself (self-scoring)");
  score_cmd->add_option("--out", sc_out, "Score JSONL output path")->required();
  score_cmd->add_option("--model-id", sc_model_id, "Model id in the score header");
  score_cmd->add_option("--automaton-id", sc_automaton_id, "Automaton id in the header");

  // kl
  auto* kl_cmd = app.add_subcommand("kl", "KL divergence from a score file");
  std::string kl_automaton, kl_corpus, kl_scores;
  kl_cmd->add_option("--automaton", kl_automaton, "Automaton JSON file")->required();
  kl_cmd->add_option("--corpus", kl_corpus, "Corpus JSONL file")->required();
  kl_cmd->add_option("--scores", kl_scores, "Score JSONL file")->required();

  // regress
  auto* regress = app.add_subcommand("regress", "Fit the complexity regression");
  std::string rg_results, rg_tsv, rg_txt;
  regress->add_option("--results", rg_results, "Results TSV")->required();
  regress->add_option("--out", rg_tsv, "Report TSV output path");
  regress->add_option("--table", rg_txt, "Aligned text table output path");

  // export-plot
  auto* plot = app.add_subcommand("export-plot", "Grid of mean values for figure axes");
  std::string pl_results, pl_rows = "D", pl_cols = "rank", pl_value = "kl_bits", pl_out;
  plot->add_option("--results", pl_results, "Results TSV")->required();
  plot->add_option("--rows", pl_rows, "Row grouping column");
  plot->add_option("--cols", pl_cols, "Column grouping column");
  plot->add_option("--value", pl_value, "Value column (kl_bits or H_bits)");
  plot->add_option("--out", pl_out, "Matrix TSV output path")->required();

  // run
  auto* run = app.add_subcommand("run", "Run the full experiment pipeline");
  std::string run_config, run_out = default_out_dir();
  int run_parallelism = 0;
  std::uint64_t run_seed = 0;
  bool run_seed_set = false;
  run->add_option("--config", run_config, "Experiment config JSON file");
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--parallelism", run_parallelism, "Worker threads");
  run->add_option("--seed", run_seed, "Master seed override")
      ->each([&](const std::string&) { run_seed_set = true; });
  bool run_print_config = false;
  run->add_flag("--print-default-config", run_print_config,
                "Print the default desk-scale config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (*generate) {
      nlohmann::json cfg;
      cfg["master_seed"] = gen_seed;
      cfg["logit_std"] = gen_logit_std;
      cfg["length_filter_threshold"] = gen_threshold;
      if (!gen_ranks.empty()) cfg["rank_grid"] = ranks_json(gen_ranks);
      char* manifest_path = nullptr;
      check(rlm_generate_family(cfg.dump().c_str(), gen_states, gen_alphabet,
                                gen_replicate, gen_out_dir.c_str(), &manifest_path));
      std::cout << take_string(manifest_path) << "\n";
    } else if (*sample) {
      DpfsaHandle a;
      check(rlm_dpfsa_load(smp_automaton.c_str(), &a.p));
      DatasetHandle ds;
      std::string id = smp_id;
      if (id.empty()) {
        auto slash = smp_automaton.find_last_of('/');
        id = smp_automaton.substr(slash == std::string::npos ? 0 : slash + 1);
        if (id.size() > 5 && id.substr(id.size() - 5) == ".json") id.resize(id.size() - 5);
      }
      check(rlm_dataset_build(a.p, id.c_str(), smp_seed, smp_size, smp_max_len,
                              smp_min_test, &ds.p));
      check(rlm_dataset_save(ds.p, smp_out.c_str()));
      char* stats = nullptr;
      check(rlm_dataset_stats_json(ds.p, &stats));
      std::cout << "{\"train\":" << rlm_dataset_train_size(ds.p)
                << ",\"test\":" << rlm_dataset_test_size(ds.p)
                << ",\"stats\":" << take_string(stats) << "}\n";
    } else if (*analyze) {
      DpfsaHandle a;
      check(rlm_dpfsa_load(ana_automaton.c_str(), &a.p));
      char* violations = nullptr;
      check(rlm_dpfsa_validate(a.p, &violations));
      std::string viol = take_string(violations);
      if (viol != "[]") {
        std::cerr << "{\"error\":{\"code\":2,\"name\":\"validation\",\"violations\":" << viol
                  << "}}\n";
        return 1;
      }
      rlm_analysis rep{};
      check(rlm_dpfsa_analyze(a.p, &rep));
      if (ana_json) {
        nlohmann::json j;
        j["entropy_bits"] = rep.entropy_bits;
        j["expected_length"] = rep.expected_length;
        j["spectral_margin"] = rep.spectral_margin;
        j["logprob_matrix_rank"] = rep.logprob_matrix_rank;
        j["num_states"] = rlm_dpfsa_num_states(a.p);
        j["alphabet_size"] = rlm_dpfsa_alphabet_size(a.p);
        j["declared_rank"] = rlm_dpfsa_declared_rank(a.p);
        std::cout << j.dump(2) << "\n";
      } else {
        std::printf("H = %.6g bits\nE[len] = %.6g symbols\n", rep.entropy_bits,
                    rep.expected_length);
        std::printf("spectral margin = %.6g\n", rep.spectral_margin);
        if (rep.logprob_matrix_rank >= 0)
          std::printf("log-prob matrix rank = %d (declared rank %d)\n",
                      rep.logprob_matrix_rank, rlm_dpfsa_declared_rank(a.p));
      }
    } else if (*train_cmd) {
      DatasetHandle ds;
      check(rlm_dataset_load(trn_corpus.c_str(), &ds.p));
      nlohmann::json cfg;
      cfg["epochs"] = trn_epochs;
      cfg["batch_size"] = trn_batch;
      cfg["lr"] = trn_lr;
      cfg["seed"] = trn_seed;
      if (trn_clip) cfg["grad_clip"] = *trn_clip;
      ModelHandle m;
      char* trace = nullptr;
      check(rlm_train(ds.p, trn_d, cfg.dump().c_str(), &m.p, &trace));
      check(rlm_model_save(m.p, trn_out.c_str()));
      std::string trace_str = take_string(trace);
      if (!trn_trace.empty()) {
        FILE* f = std::fopen(trn_trace.c_str(), "w");
        if (!f) throw CliFailure{RLM_ERR_IO, "cannot write trace file " + trn_trace};
        std::fputs(trace_str.c_str(), f);
        std::fclose(f);
      }
      std::cout << trace_str << "\n";
    } else if (*score_cmd) {
      if (sc_model.empty() == sc_automaton.empty())
        throw CliFailure{RLM_ERR_INVALID_ARGUMENT,
                         "pass exactly one of --model or --automaton"};
      DatasetHandle ds;
      check(rlm_dataset_load(sc_corpus.c_str(), &ds.p));
      if (!sc_model.empty()) {
        ModelHandle m;
        check(rlm_model_load(sc_model.c_str(), &m.p));
        check(rlm_score_model(m.p, ds.p,
                              sc_model_id.empty() ? sc_model.c_str() : sc_model_id.c_str(),
                              sc_automaton_id.empty() ? nullptr : sc_automaton_id.c_str(),
                              sc_out.c_str()));
      } else {
        DpfsaHandle a;
        check(rlm_dpfsa_load(sc_automaton.c_str(), &a.p));
        check(rlm_score_automaton(a.p, ds.p,
                                  sc_automaton_id.empty() ? nullptr : sc_automaton_id.c_str(),
                                  sc_out.c_str()));
      }
      std::cout << sc_out << "\n";
    } else if (*kl_cmd) {
      DpfsaHandle a;
      check(rlm_dpfsa_load(kl_automaton.c_str(), &a.p));
      DatasetHandle ds;
      check(rlm_dataset_load(kl_corpus.c_str(), &ds.p));
      rlm_kl_estimate est{};
      check(rlm_kl(a.p, ds.p, kl_scores.c_str(), &est));
      nlohmann::json j;
      j["kl_bits"] = est.kl_bits;
      j["cross_entropy_bits"] = est.cross_entropy_bits;
      j["entropy_bits"] = est.entropy_bits;
      j["stderr_bits"] = est.stderr_bits;
      j["n_strings"] = est.n_strings;
      j["n_excluded_truncated"] = est.n_excluded_truncated;
      j["low_confidence"] = est.n_strings < 2;
      std::cout << j.dump(2) << "\n";
    } else if (*regress) {
      char* text = nullptr;
      check(rlm_regress(rg_results.c_str(), rg_tsv.empty() ? nullptr : rg_tsv.c_str(),
                        rg_txt.empty() ? nullptr : rg_txt.c_str(), &text));
      std::cout << take_string(text);
    } else if (*plot) {
      check(rlm_export_plot(pl_results.c_str(), pl_rows.c_str(), pl_cols.c_str(),
                            pl_value.c_str(), pl_out.c_str()));
      std::cout << pl_out << "\n";
    } else if (*run) {
      if (run_print_config) {
        char* cfg = nullptr;
        check(rlm_default_experiment_config(&cfg));
        std::cout << take_string(cfg);
        return 0;
      }
      std::string config_json;
      if (!run_config.empty()) {
        FILE* f = std::fopen(run_config.c_str(), "rb");
        if (!f) throw CliFailure{RLM_ERR_IO, "cannot read config file " + run_config};
        char buf[4096];
        size_t n;
        while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) config_json.append(buf, n);
        std::fclose(f);
      } else {
        char* cfg = nullptr;
        check(rlm_default_experiment_config(&cfg));
        config_json = take_string(cfg);
      }
      nlohmann::json cfg = nlohmann::json::parse(config_json);
      if (run_parallelism > 0) cfg["parallelism"] = run_parallelism;
      if (run_seed_set) cfg["generation"]["master_seed"] = run_seed;
      char* results = nullptr;
      check(rlm_run_experiment(cfg.dump().c_str(), run_out.c_str(), &results));
      std::cout << take_string(results) << "\n";
    }
  } catch (const CliFailure& e) {
    nlohmann::json err;
    err["error"]["code"] = static_cast<int>(e.status);
    err["error"]["name"] = rlm_status_name(e.status);
    err["error"]["message"] = e.message;
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"]["code"] = static_cast<int>(RLM_ERR_INTERNAL);
    err["error"]["name"] = "internal";
    err["error"]["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
