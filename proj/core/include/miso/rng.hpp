#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <random>

namespace miso {

/// Deterministic random source used everywhere randomness is needed.
///
/// All distribution transforms are implemented here rather than with
/// std::<distribution> so that (a) a given seed produces the same stream on
/// every standard library and (b) the full generator state is exactly the
/// mt19937_64 state, which serializes losslessly into checkpoints.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller. Consumes exactly two uniforms per call;
  /// no cached spare, so the state is always just the engine state.
  double normal();

  /// Uniform index in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  std::vector<double> normal_vec(std::size_t n);
  std::vector<double> uniform_vec(std::size_t n, double lo, double hi);

  /// mt19937_64 state as the standard stream text form.
  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  bool operator==(const Rng& other) const { return gen_ == other.gen_; }

 private:
  std::mt19937_64 gen_;
};

/// Stable seed derivation so independent streams (data generation, model
/// init, training, evaluation) never overlap even for adjacent base seeds.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

}  // namespace miso
