#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace prewarp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Caller violated a documented precondition (dimension mismatch, bad flag).
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// Input data could not be parsed or is unusable.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A linear-algebra or optimization step failed beyond recovery.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Derives an independent stream seed from a base seed and up to two stream ids.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return detail::splitmix64(detail::splitmix64(base ^ detail::splitmix64(a)) ^ detail::splitmix64(b));
}

/// Deterministic 64-bit xorshift generator; identical output on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(detail::splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  std::uint64_t next_u64() {
    state_ = detail::splitmix64(state_);
    return state_;
  }

  /// Uniform draw in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform draw in (0, 1): never returns an exact endpoint.
  double uniform_open() {
    double u = uniform();
    return u == 0.0 ? 0x1.0p-54 : u;
  }

  /// Uniform integer in [0, n).
  Index below(Index n) { return static_cast<Index>(next_u64() % static_cast<std::uint64_t>(n)); }

  /// Standard normal via Box-Muller (deterministic, no library state).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform_open();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// k distinct indices from [0, n), drawn by partial Fisher-Yates.
inline std::vector<Index> sample_without_replacement(Index n, Index k, Rng& rng) {
  std::vector<Index> pool(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  std::vector<Index> out(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    Index j = i + rng.below(n - i);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    out[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
  }
  return out;
}

/// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (Index i = static_cast<Index>(v.size()) - 1; i > 0; --i) {
    Index j = rng.below(i + 1);
    std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
  }
}

}  // namespace prewarp
