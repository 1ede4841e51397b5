#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgx {

// Thrown for malformed inputs, broken invariants and bad arguments.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic RNG used everywhere randomness is needed. std:: distributions
// are implementation-defined, so sampling is done by hand to keep outputs
// byte-identical across compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {
    // warm up so nearby seeds decorrelate
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, n)
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller (deterministic, no cached second value)
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // pick index by non-negative weights
  size_t next_weighted(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double x = next_double() * total;
    for (size_t i = 0; i < weights.size(); ++i) {
      x -= weights[i];
      if (x < 0.0) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // derive an independent stream, e.g. per epoch or per resample
  Rng fork(uint64_t salt) const {
    Rng r(0);
    r.state_ = state_ ^ (0xd1342543de82ef95ull * (salt + 1));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// BCE on a logit, stable for large |logit|.
inline double bce_with_logit(double logit, double target) {
  // max(z,0) - z*y + log(1+exp(-|z|))
  double m = logit > 0.0 ? logit : 0.0;
  return m - logit * target + std::log1p(std::exp(-std::fabs(logit)));
}

}  // namespace kgx
