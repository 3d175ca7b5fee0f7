#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace rlmlab {

// All randomness in the project flows through StreamRng, a keyed counter-based
// generator (splitmix64 finalizer over an incrementing counter). Streams are
// derived as key = mix-chain(master_seed, purpose tag, indices...), so any run
// can reproduce any cell's stream in isolation. The algorithm identifier below
// is recorded in experiment manifests.
inline constexpr const char* kRngAlgorithm = "splitmix64-v1";

std::uint64_t mix64(std::uint64_t x);

// key = chained mix over the master seed, a purpose tag, and stream indices.
std::uint64_t derive_key(std::uint64_t master_seed, std::string_view tag,
                         std::initializer_list<std::uint64_t> indices = {});

class StreamRng {
 public:
  explicit StreamRng(std::uint64_t key) : key_(key) {}

  StreamRng(std::uint64_t master_seed, std::string_view tag,
            std::initializer_list<std::uint64_t> indices = {})
      : key_(derive_key(master_seed, tag, indices)) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01();

  // Unbiased uniform integer in [0, n); n >= 1.
  std::uint64_t uniform_below(std::uint64_t n);

  // Standard normal via Box-Muller (second variate cached).
  double gaussian();
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // Index sampled from an (approximately) normalized probability vector.
  int categorical(const Eigen::VectorXd& probs);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rlmlab
