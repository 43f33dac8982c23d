#include "mrubric/rng.hpp"

#include <algorithm>
#include <cmath>

#include "mrubric/normal.hpp"

namespace mrubric {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) noexcept {
  std::uint64_t state = seed;
  for (auto& word : s_) word = splitmix64(state);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t sweep, std::uint64_t block,
                std::uint64_t entity) noexcept {
  std::uint64_t state = seed;
  std::uint64_t key = splitmix64(state);
  state = key ^ sweep;
  key = splitmix64(state);
  state = key ^ block;
  key = splitmix64(state);
  state = key ^ entity;
  return Rng(splitmix64(state));
}

Rng::result_type Rng::operator()() noexcept {
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

double Rng::uniform() noexcept {
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() noexcept { return normal::quantile(uniform()); }

double Rng::exponential() noexcept { return -std::log(uniform()); }

double Rng::gamma(double shape) noexcept {
  if (shape < 1.0) return std::exp(log_gamma(shape));
  // Marsaglia & Tsang
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::log_gamma(double shape) noexcept {
  if (shape >= 1.0) return std::log(gamma(shape));
  // G(a) = G(a + 1) * U^(1/a)
  const double boosted = gamma(shape + 1.0);
  return std::log(boosted) + std::log(uniform()) / shape;
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Lemire's nearly divisionless method
  std::uint64_t x = (*this)();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = -n % n;
    while (low < threshold) {
      x = (*this)();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) noexcept {
  double top = -std::numeric_limits<double>::infinity();
  for (double w : log_weights)
    if (w > top) top = w;
  if (!std::isfinite(top)) return log_weights.size();
  double total = 0.0;
  for (double w : log_weights) total += std::exp(w - top);
  double target = uniform() * total;
  std::size_t last_positive = log_weights.size();
  for (std::size_t m = 0; m < log_weights.size(); ++m) {
    const double p = std::exp(log_weights[m] - top);
    if (p > 0.0) last_positive = m;
    target -= p;
    if (target < 0.0) return m;
  }
  return last_positive;
}

void Rng::dirichlet(std::span<const double> concentration, std::span<double> out) noexcept {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < concentration.size(); ++m) {
    out[m] = log_gamma(concentration[m]);
    top = std::max(top, out[m]);
  }
  double total = 0.0;
  for (std::size_t m = 0; m < concentration.size(); ++m) {
    out[m] = std::exp(out[m] - top);
    total += out[m];
  }
  for (std::size_t m = 0; m < concentration.size(); ++m) out[m] /= total;
}

}  // namespace mrubric
