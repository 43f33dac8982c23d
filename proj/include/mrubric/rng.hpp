#pragma once

#include <cstdint>
#include <limits>
#include <span>

namespace mrubric {

/// xoshiro256** generator. Satisfies UniformRandomBitGenerator, but the
/// library draws variates through the member functions below so that results
/// do not depend on the standard library's distribution implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept;

  /// Independent stream keyed by (seed, sweep, block, entity). Draws for one
  /// entity never depend on how the other entities are scheduled.
  static Rng stream(std::uint64_t seed, std::uint64_t sweep, std::uint64_t block,
                    std::uint64_t entity) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() noexcept;

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double normal() noexcept;
  double exponential() noexcept;
  /// Gamma(shape, rate = 1).
  double gamma(double shape) noexcept;
  /// log of a Gamma(shape, 1) draw; stays finite for very small shapes.
  double log_gamma(double shape) noexcept;
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Index drawn with probabilities proportional to exp(log_weights).
  /// Returns log_weights.size() when every weight is -inf or NaN.
  std::size_t categorical_log(std::span<const double> log_weights) noexcept;

  /// Dirichlet(concentration) draw written into out.
  void dirichlet(std::span<const double> concentration, std::span<double> out) noexcept;

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace mrubric
