#pragma once

// Independent oracles and statistics shared by the test programs. Nothing
// here calls into the library's numerical code.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mrubric/sampler.hpp"
#include "mrubric/spatial.hpp"
#include "mrubric/types.hpp"

namespace oracle {

inline long double phi(long double x) { return 0.5L * std::erfc(-x / std::sqrt(2.0L)); }

inline double cell(const Eigen::VectorXd& breaks, int k, double mu) {
  const long double lo = k == 1 ? -INFINITY : breaks(k - 2);
  const long double hi = k == breaks.size() + 1 ? INFINITY : breaks(k - 1);
  const long double a = std::isinf(lo) ? 0.0L : phi(lo - mu);
  const long double b = std::isinf(hi) ? 1.0L : phi(hi - mu);
  return static_cast<double>(b - a);
}

/// sup |F_n - F| for a sample against a continuous CDF.
inline double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double f = cdf(x[j]);
    d = std::max({d, (j + 1) / n - f, f - j / n});
  }
  return d;
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// Lag-window estimate of the effective sample size of a chain.
inline double effective_size(const std::vector<double>& x) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  c0 /= n;
  if (c0 == 0.0) return static_cast<double>(n);
  double tau = 1.0;
  for (std::size_t lag = 1; lag < n / 2; ++lag) {
    double c = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) c += (x[t] - mean) * (x[t + lag] - mean);
    c /= n * c0;
    if (c < 0.05) break;
    tau += 2.0 * c;
  }
  return n / tau;
}

/// Standard deviation of the mean of an autocorrelated series.
inline double mean_se(const std::vector<double>& x) {
  const std::size_t n = x.size();
  double mean = 0.0, sq = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  for (double v : x) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / (n - 1) / effective_size(x));
}

inline double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / x.size();
}

}  // namespace oracle

namespace fixture {

/// Ratings of a toy dataset given as (item, user, z) triples.
inline mrubric::RatingsDataset dataset(std::vector<mrubric::Rating> r, int K, std::size_t I,
                                       std::size_t U) {
  return mrubric::RatingsDataset(std::move(r), K, I, U);
}

inline mrubric::ItemTable grid_items(std::size_t I, std::size_t p = 0, unsigned seed = 3) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  mrubric::ItemTable t;
  t.covariates.resize(static_cast<Eigen::Index>(I), static_cast<Eigen::Index>(p));
  for (Eigen::Index j = 0; j < t.covariates.size(); ++j) t.covariates.data()[j] = n01(gen);
  for (std::size_t i = 0; i < I; ++i) t.locations.push_back({u01(gen), u01(gen)});
  return t;
}

}  // namespace fixture
