#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wm {

// Default scalar for all production networks. Tests instantiate the templated
// layer math with double where finite-difference tolerances demand it.
using Scalar = float;

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using ArrayXX = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic>;

using MatrixXf = MatrixX<Scalar>;
using VectorXf = VectorX<Scalar>;
using VectorXi = Eigen::VectorXi;

// ---------------------------------------------------------------------------
// Error taxonomy. One base so callers can catch everything from this library,
// concrete types for the failure classes the modules distinguish.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct DecodeError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct SizeError : Error {
  using Error::Error;
};
struct GeometryError : Error {
  using Error::Error;
};
struct ArchitectureError : Error {
  using Error::Error;
};
struct BudgetError : Error {
  using Error::Error;
};
struct ClassError : Error {
  using Error::Error;
};
struct FeatureError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  int epoch;
  TrainingError(const std::string& msg, int epoch_index)
      : Error(msg + " (epoch " + std::to_string(epoch_index) + ")"), epoch(epoch_index) {}
};

struct EmbeddingError : Error {
  double achieved_retention;
  EmbeddingError(const std::string& msg, double ret) : Error(msg), achieved_retention(ret) {}
};

// ---------------------------------------------------------------------------
// Content digests. FNV-1a over raw bytes; not cryptographic, used to key
// artifacts, caches and config records.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(std::uint64_t v);

template <typename T>
std::uint64_t digest_of(const std::vector<T>& v, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(v.data(), v.size() * sizeof(T), h);
}

// ---------------------------------------------------------------------------
// Seeded RNG with named sub-streams. All randomness in an experiment flows
// from one global seed; modules derive independent streams by name so one
// module's draw count does not perturb another's.
//
// Generator state advance and every distribution below are fixed algorithms
// (no std::<distribution>), so a (seed, stream) pair replays identically.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t s = root ^ fnv1a64(name);
  s ^= 0x6a09e667f3bcc909ull + index * 0x9e3779b97f4a7c15ull;
  std::uint64_t t = s;
  return splitmix64(t);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }
  Rng(std::uint64_t root, std::string_view name, std::uint64_t index = 0)
      : Rng(stream_seed(root, name, index)) {}

  // xoshiro256**
  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  // Standard normal via Box-Muller, spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    shuffle(p);
    return p;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace wm
