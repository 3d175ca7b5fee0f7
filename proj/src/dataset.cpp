#include "dataset.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "util.hpp"

namespace rlmlab {

namespace {

std::string ids_preview(const std::vector<int>& ids) {
  std::string s = "[";
  for (std::size_t i = 0; i < ids.size() && i < 12; ++i) {
    if (i) s += " ";
    s += std::to_string(ids[i]);
  }
  if (ids.size() > 12) s += " ...";
  return s + "]";
}

std::uint64_t group_hash(std::uint64_t seed, const std::vector<int>& ids) {
  std::uint64_t h = derive_key(seed, "split-group");
  for (int id : ids) h = mix64(h ^ (static_cast<std::uint64_t>(id) + 0x9E3779B97F4A7C15ull));
  return h;
}

StringRecord sample_one(const Dpfsa& a, const Eigen::MatrixXd& probs, StreamRng& rng,
                        int max_len) {
  StringRecord rec;
  int q = a.initial_state;
  const int eos = a.alphabet.eos_id();
  for (;;) {
    int outcome = rng.categorical(probs.col(q));
    if (outcome == eos) {
      rec.truncated = false;
      return rec;
    }
    if (rec.length() == max_len) {
      // The drawn symbol would exceed the cap; EOS was never sampled.
      rec.truncated = true;
      return rec;
    }
    rec.symbols.push_back(outcome);
    q = a.topology(q, outcome);
  }
}

}  // namespace

StringRecord sample_string(const Dpfsa& a, StreamRng& rng, int max_len) {
  return sample_one(a, next_distribution_matrix(a), rng, max_len);
}

Dataset build_dataset(const Dpfsa& a, std::uint64_t seed, int size, int max_len,
                      int min_test, const std::string& automaton_id) {
  if (size <= min_test)
    fail(ErrorCode::invalid_argument, "dataset size must exceed min_test");
  require_valid(a);

  Eigen::MatrixXd probs = next_distribution_matrix(a);
  std::vector<StringRecord> samples;
  samples.reserve(size);
  for (int i = 0; i < size; ++i) {
    // Per-string substream: the sample does not depend on draw order.
    StreamRng rng(seed, "sample", {static_cast<std::uint64_t>(i)});
    samples.push_back(sample_one(a, probs, rng, max_len));
  }

  // Group identical symbol sequences; whole groups go to one split so the
  // splits stay disjoint as string sets.
  std::map<std::vector<int>, std::vector<int>> groups;  // sequence -> sample indices
  for (int i = 0; i < size; ++i) groups[samples[i].symbols].push_back(i);

  struct GroupRef {
    const std::vector<int>* ids;
    const std::vector<int>* members;
    std::uint64_t hash;
  };
  std::vector<GroupRef> refs;
  refs.reserve(groups.size());
  for (const auto& [ids, members] : groups)
    refs.push_back({&ids, &members, group_hash(seed, ids)});
  std::sort(refs.begin(), refs.end(), [](const GroupRef& x, const GroupRef& y) {
    if (x.hash != y.hash) return x.hash > y.hash;  // descending
    return *x.ids < *y.ids;
  });

  std::vector<char> in_test(size, 0);
  int test_count = 0;
  const GroupRef* last_assigned = nullptr;
  for (const auto& ref : refs) {
    if (test_count >= min_test) break;
    for (int i : *ref.members) in_test[i] = 1;
    test_count += static_cast<int>(ref.members->size());
    last_assigned = &ref;
  }
  if (test_count >= size) {
    const auto* g = last_assigned;
    fail(ErrorCode::infeasible_split,
         "split infeasible: the train split would be empty; offending string group " +
             ids_preview(*g->ids) + " carries " + std::to_string(g->members->size()) +
             " of " + std::to_string(size) + " samples");
  }

  Dataset ds;
  ds.source_automaton_id = automaton_id;
  ds.seed = seed;
  ds.max_len = max_len;
  ds.alphabet_size = a.alphabet.size;
  for (int i = 0; i < size; ++i) {
    if (in_test[i]) ds.test.push_back(std::move(samples[i]));
    else ds.train.push_back(std::move(samples[i]));
  }
  ds.stats = dataset_stats(ds);
  return ds;
}

DatasetStats dataset_stats(const Dataset& ds) {
  if (ds.train.empty() && ds.test.empty())
    fail(ErrorCode::invalid_argument, "dataset_stats: empty dataset");
  DatasetStats s;
  long total = 0;
  long count = 0;
  int max_length = 0;
  auto absorb = [&](const std::vector<StringRecord>& v) {
    for (const auto& rec : v) {
      total += rec.length();
      count += 1;
      max_length = std::max(max_length, rec.length());
      if (rec.truncated) s.num_truncated += 1;
    }
  };
  absorb(ds.train);
  absorb(ds.test);
  s.mean_length = static_cast<double>(total) / static_cast<double>(count);
  s.histogram.assign(max_length / s.histogram_bin_width + 1, 0);
  auto bin = [&](const std::vector<StringRecord>& v) {
    for (const auto& rec : v) s.histogram[rec.length() / s.histogram_bin_width] += 1;
  };
  bin(ds.train);
  bin(ds.test);
  return s;
}

std::string dataset_stats_to_json(const DatasetStats& s) {
  nlohmann::json j;
  j["mean_length"] = s.mean_length;
  j["num_truncated"] = s.num_truncated;
  j["histogram_bin_width"] = s.histogram_bin_width;
  j["histogram"] = s.histogram;
  return j.dump();
}

void save_dataset(const Dataset& ds, const std::string& corpus_path) {
  std::ostringstream out;
  auto emit = [&out](const StringRecord& rec, const char* split) {
    nlohmann::json j;
    j["split"] = split;
    j["ids"] = rec.symbols;
    j["truncated"] = rec.truncated;
    out << j.dump() << "\n";
  };
  for (const auto& rec : ds.train) emit(rec, "train");
  for (const auto& rec : ds.test) emit(rec, "test");
  write_file(corpus_path, out.str());

  nlohmann::json meta;
  meta["source_automaton_id"] = ds.source_automaton_id;
  meta["seed"] = ds.seed;
  meta["max_len"] = ds.max_len;
  meta["alphabet_size"] = ds.alphabet_size;
  meta["stats"] = nlohmann::json::parse(dataset_stats_to_json(ds.stats));
  write_file(corpus_path + ".meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const std::string& corpus_path) {
  Dataset ds;
  std::istringstream in(read_file(corpus_path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      StringRecord rec;
      rec.symbols = j.at("ids").get<std::vector<int>>();
      rec.truncated = j.at("truncated").get<bool>();
      std::string split = j.at("split").get<std::string>();
      if (split == "train") ds.train.push_back(std::move(rec));
      else if (split == "test") ds.test.push_back(std::move(rec));
      else fail(ErrorCode::parse, "unknown split at line " + std::to_string(lineno));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::parse,
           "corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (ds.train.empty() && ds.test.empty())
    fail(ErrorCode::parse, "corpus file has no records: " + corpus_path);

  try {
    nlohmann::json meta = nlohmann::json::parse(read_file(corpus_path + ".meta.json"));
    ds.source_automaton_id = meta.value("source_automaton_id", "");
    ds.seed = meta.value("seed", std::uint64_t{0});
    ds.max_len = meta.value("max_len", 256);
    ds.alphabet_size = meta.value("alphabet_size", 0);
  } catch (const Error&) {
    // Sidecar is optional on load; stats are recomputed below.
  } catch (const nlohmann::json::exception&) {
  }
  ds.stats = dataset_stats(ds);
  return ds;
}

}  // namespace rlmlab
