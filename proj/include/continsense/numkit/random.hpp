#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "continsense/errors.hpp"
#include "continsense/numkit/matrix.hpp"

namespace continsense::numkit {

// Seeded generator with platform-independent derived distributions.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The std:: distributions are not (their algorithms are left to the
// library vendor), so every derived draw is computed here:
//   uniform01()        = (engine() >> 11) * 2^-53            in [0, 1)
//   uniform(a, b)      = a + (b - a) * uniform01()
//   index(n)           = rejection sampling on engine() below the largest
//                        multiple of n, then modulo n
//   normal()           = Box-Muller on two uniform01() draws (cosine branch)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::size_t index(std::size_t n) {
    if (n == 0) throw ParameterError("Rng::index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates, back to front.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw ParameterError("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + index(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

  // Derive an independent child seed; used to give each parameter group or
  // experiment cell its own stream.
  std::uint64_t fork_seed() { return engine_() ^ 0x9E3779B97F4A7C15ULL; }

 private:
  std::mt19937_64 engine_;
};

enum class InitScheme { XavierUniform, Uniform };

struct InitSpec {
  InitScheme scheme = InitScheme::XavierUniform;
  double bound = 0.1;  // used by Uniform: draws from (-bound, bound)
};

inline double xavier_bound(std::size_t rows, std::size_t cols) {
  return std::sqrt(6.0 / static_cast<double>(rows + cols));
}

// Fills row-major. For a weight of shape out x in, fan_in = cols and
// fan_out = rows.
inline DenseMatrix init_params(std::size_t rows, std::size_t cols, InitSpec spec, Rng& rng) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("init_params: zero-sized shape " + DenseMatrix::shape_string(rows, cols));
  }
  const double a = spec.scheme == InitScheme::XavierUniform ? xavier_bound(rows, cols) : spec.bound;
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-a, a);
  return m;
}

}  // namespace continsense::numkit
