#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "common/error.hpp"

namespace sologan {

// Deterministic random source. Every draw consumes a fixed number of engine
// words, so serialized engine state fully determines the continuation; no
// distribution objects with hidden carry-over are kept.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second value of the pair is discarded.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [lo, hi] inclusive, rejection-sampled to avoid modulo bias.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    require(lo <= hi, ErrorCode::invalid_argument, "uniform_int: empty range");
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(engine_());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return lo + static_cast<int64_t>(v % range);
  }

  uint64_t next_word() { return engine_(); }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    require(!is.fail(), ErrorCode::checkpoint_corrupt, "bad RNG state string");
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sologan
