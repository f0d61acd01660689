// Seeding, sampling and confidence intervals for the Monte Carlo harnesses.
// Everything here is bit-reproducible across standard libraries: no
// std::*_distribution is used.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace mixedctrl::stats {

/// Two-sided 99% standard-normal quantile.
inline constexpr double kZ99 = 2.5758293035489004;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for rollout `index` under master `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  /// Index drawn from a discrete distribution given by `probs` (need not
  /// sum exactly to one; the last index absorbs rounding).
  template <class Range>
  std::size_t discrete(const Range& probs) {
    const double u = uniform();
    double acc = 0.0;
    std::size_t i = 0, last = 0;
    for (double p : probs) {
      if (p > 0.0) last = i;
      acc += p;
      if (u < acc) return i;
      ++i;
    }
    return last;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = kZ99) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Worker count: MIXEDCTRL_THREADS if set, otherwise hardware concurrency.
inline std::size_t thread_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MIXEDCTRL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<std::size_t>(v);
  }
  return n;
}

/// Samples are seeded in fixed-size blocks so results do not depend on the
/// worker count.
inline constexpr std::size_t kSeedBlock = 1024;

/// Runs body(rng, i) for every sample i in [0, n); sample i draws from the
/// stream of its block, so output is identical for any worker count.
template <class Body>
void parallel_samples(std::uint64_t seed, std::size_t n, Body&& body) {
  const std::size_t blocks = (n + kSeedBlock - 1) / kSeedBlock;
  const std::size_t workers = std::min(thread_count(), std::max<std::size_t>(1, blocks));
  auto run_block = [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    const std::size_t end = std::min(n, (b + 1) * kSeedBlock);
    for (std::size_t i = b * kSeedBlock; i < end; ++i) body(rng, i);
  };
  if (workers <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) run_block(b);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t b = w; b < blocks; b += workers) run_block(b);
    });
  for (auto& t : pool) t.join();
}

}  // namespace mixedctrl::stats
