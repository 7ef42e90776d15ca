#include "blockpipe/rng.hpp"

#include <cmath>

namespace blockpipe {

namespace {
constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;  // 2^-53
}  // namespace

uint64_t RandomSource::next_u64() {
  state += kGolden;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double RandomSource::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * kTwoPow53Inv;
}

double RandomSource::next_normal() {
  const uint64_t a = next_u64();
  const uint64_t b = next_u64();
  const double u1 = static_cast<double>((a >> 11) + 1) * kTwoPow53Inv;  // (0, 1]
  const double u2 = static_cast<double>(b >> 11) * kTwoPow53Inv;        // [0, 1)
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * M_PI * u2);
}

uint64_t RandomSource::next_below(uint64_t n) { return next_u64() % n; }

Tensor RandomSource::normal_tensor(std::vector<int64_t> shape, double sigma) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = next_normal() * sigma;
  return t;
}

std::vector<int> RandomSource::permutation(int n) {
  std::vector<int> p(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(next_below(static_cast<uint64_t>(i) + 1));
    std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
  }
  return p;
}

uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> tags) {
  uint64_t s = base;
  for (uint64_t tag : tags) {
    // Fold the tag in, then scramble with one splitmix64 step so adjacent
    // tags land in unrelated regions of the state space.
    RandomSource rs(s ^ ((tag + 1) * kGolden));
    s = rs.next_u64();
  }
  return s;
}

}  // namespace blockpipe
