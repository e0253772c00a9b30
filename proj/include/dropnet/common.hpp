#pragma once
// Shared error and RNG plumbing for the dropnet library.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dropnet {

enum class Errc {
  cyclic_graph,
  non_uniform_path_length,
  no_input_output,
  path_explosion,
  unknown_edge,
  empty_dims,
  support_too_large,
  dimension_mismatch,
  nonlinear_activation,
  joint_mask_data,
  not_arborescence,
  degenerate_input,
  numeric_overflow,
  certification_failed,
  config_error,
};

inline const char* errc_name(Errc k) {
  switch (k) {
    case Errc::cyclic_graph: return "CyclicGraph";
    case Errc::non_uniform_path_length: return "NonUniformPathLength";
    case Errc::no_input_output: return "NoInputOutput";
    case Errc::path_explosion: return "PathExplosion";
    case Errc::unknown_edge: return "UnknownEdge";
    case Errc::empty_dims: return "EmptyDims";
    case Errc::support_too_large: return "SupportTooLarge";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::nonlinear_activation: return "NonlinearActivation";
    case Errc::joint_mask_data: return "JointMaskDataDistribution";
    case Errc::not_arborescence: return "NotArborescence";
    case Errc::degenerate_input: return "DegenerateInput";
    case Errc::numeric_overflow: return "NumericOverflow";
    case Errc::certification_failed: return "CertificationFailed";
    case Errc::config_error: return "ConfigError";
  }
  return "Error";
}

// Process exit codes: 0 ok, 2 config/input error, 3 certification failed,
// 4 check failure (set by the verify driver, not via exception),
// 5 numeric overflow.
class Error : public std::runtime_error {
 public:
  Error(Errc kind, const std::string& msg)
      : std::runtime_error(std::string(errc_name(kind)) + ": " + msg), kind_(kind) {}
  Errc kind() const { return kind_; }
  int exit_code() const {
    switch (kind_) {
      case Errc::certification_failed: return 3;
      case Errc::numeric_overflow: return 5;
      default: return 2;
    }
  }

 private:
  Errc kind_;
};

[[noreturn]] inline void fail(Errc kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool ok, Errc kind, const std::string& msg) {
  if (!ok) fail(kind, msg);
}

// Deterministic PRNG. All randomness flows through this wrapper so traces are
// byte-identical across standard libraries: std:: distributions are
// implementation-defined, the mappings below are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::size_t uniform_index(std::size_t n) {
    auto i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  // Draw an index according to `probs` (assumed nonnegative, summing to ~1).
  std::size_t categorical(const std::vector<double>& probs) {
    double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
  }

 private:
  std::mt19937_64 gen_;
};

// Stateless seed derivation (splitmix64) for independent child streams.
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline double sq(double x) { return x * x; }

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace dropnet
