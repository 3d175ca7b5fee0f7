#include "rng.hpp"

#include <cmath>

#include "errors.hpp"
#include "util.hpp"

namespace rlmlab {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_key(std::uint64_t master_seed, std::string_view tag,
                         std::initializer_list<std::uint64_t> indices) {
  std::uint64_t h = mix64(master_seed + kGolden);
  h = mix64(h ^ fnv1a64(tag.data(), tag.size()));
  for (std::uint64_t idx : indices) {
    h = mix64(h ^ (idx + kGolden));
  }
  return h;
}

std::uint64_t StreamRng::next_u64() {
  counter_ += 1;
  return mix64(key_ + counter_ * kGolden);
}

double StreamRng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t StreamRng::uniform_below(std::uint64_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "uniform_below: n must be positive");
  if (n == 1) return 0;
  const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    std::uint64_t x = next_u64();
    if (x >= threshold) return x % n;
  }
}

double StreamRng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u keeps the log argument strictly positive.
  double u1 = 1.0 - uniform01();
  double u2 = uniform01();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

int StreamRng::categorical(const Eigen::VectorXd& probs) {
  double u = uniform01();
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace rlmlab
