#include "mrubric/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mrubric/errors.hpp"
#include "mrubric/io.hpp"
#include "mrubric/model.hpp"
#include "mrubric/normal.hpp"
#include "mrubric/parallel.hpp"

namespace mrubric {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_sum_exp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

double beta_norm(const Draw& draw, std::size_t i) {
  if (draw.beta.cols() > 0 && draw.beta.rows() == 0)
    throw Error(ErrorKind::Configuration,
                "draw has latent factors but they were not kept; refit with keep_factors");
  if (draw.beta.size() == 0) return 0.0;
  return draw.beta.row(static_cast<Eigen::Index>(i)).norm();
}

void require_factors(const PosteriorSamples& samples) {
  if (samples.meta.factors > 0 && !samples.meta.factors_kept)
    throw Error(ErrorKind::Configuration,
                "chain has latent factors but did not keep them; refit with keep_factors");
}

std::vector<Rubric> rubrics_of(const Draw& draw) {
  std::vector<Rubric> out;
  out.reserve(static_cast<std::size_t>(draw.rubric_count()));
  for (int m = 0; m < draw.rubric_count(); ++m) out.push_back(draw.rubric(m));
  return out;
}

}  // namespace

double expected_rating_under(double xi, double beta_norm, const Rubric& rubric) {
  const double scale = std::sqrt(1.0 + beta_norm * beta_norm);
  const int K = rubric.categories();
  double total = 0.0;
  for (int k = 1; k <= K; ++k)
    total += k * normal::interval_probability((rubric.lower(k) - xi) / scale,
                                              (rubric.upper(k) - xi) / scale);
  return total;
}

double expected_rating(double xi, double beta_norm, std::span<const double> weights,
                       std::span<const Rubric> rubrics) {
  double total = 0.0;
  for (std::size_t m = 0; m < rubrics.size(); ++m)
    total += weights[m] * expected_rating_under(xi, beta_norm, rubrics[m]);
  return total;
}

double item_fixed_effect(const Draw& draw, const ItemTable& items, const SpatialBasis& basis,
                         std::size_t i) {
  const auto ii = static_cast<Eigen::Index>(i);
  double xi = draw.item_effects(ii);
  if (draw.gamma.size() > 0) xi += items.covariates.row(ii).dot(draw.gamma);
  if (draw.eta.size() > 0) xi += basis.design.row(ii).dot(draw.eta);
  return xi;
}

double item_quality(const Draw& draw, const ItemTable& items, const SpatialBasis& basis,
                    std::size_t i) {
  const std::vector<Rubric> rubrics = rubrics_of(draw);
  return expected_rating(item_fixed_effect(draw, items, basis, i), beta_norm(draw, i),
                         {draw.weights.data(), static_cast<std::size_t>(draw.weights.size())},
                         rubrics);
}

double rubric_adjusted_quality(const Draw& draw, const ItemTable& items, const SpatialBasis& basis,
                               std::size_t i, int m) {
  return expected_rating_under(item_fixed_effect(draw, items, basis, i), beta_norm(draw, i),
                               draw.rubric(m));
}

ItemQuality quality_summary(const PosteriorSamples& samples, const RatingsDataset& data,
                            const ItemTable& items, const SpatialBasis& basis, int workers) {
  require_factors(samples);
  const auto T = static_cast<Eigen::Index>(samples.draws.size());
  const auto I = static_cast<Eigen::Index>(items.items());
  ItemQuality q;
  q.draws.resize(T, I);
  parallel_for(samples.draws.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      const Draw& d = samples.draws[t];
      const std::vector<Rubric> rubrics = rubrics_of(d);
      const std::span<const double> w{d.weights.data(), static_cast<std::size_t>(d.weights.size())};
      for (Eigen::Index i = 0; i < I; ++i)
        q.draws(static_cast<Eigen::Index>(t), i) = expected_rating(
            item_fixed_effect(d, items, basis, static_cast<std::size_t>(i)),
            beta_norm(d, static_cast<std::size_t>(i)), w, rubrics);
    }
  });
  q.mean = T > 0 ? Eigen::VectorXd(q.draws.colwise().mean().transpose())
                 : Eigen::VectorXd::Constant(I, kNaN);
  q.sd.resize(I);
  for (Eigen::Index i = 0; i < I; ++i)
    q.sd(i) = T > 1 ? std::sqrt((q.draws.col(i).array() - q.mean(i)).square().sum() /
                                static_cast<double>(T - 1))
                    : 0.0;
  q.empirical_mean = Eigen::VectorXd::Constant(I, kNaN);
  q.counts.assign(static_cast<std::size_t>(I), 0);
  for (std::size_t i = 0; i < data.items() && i < static_cast<std::size_t>(I); ++i) {
    const auto obs = data.item_entries(i);
    q.counts[i] = obs.size();
    if (obs.empty()) continue;
    double s = 0.0;
    for (std::size_t o : obs) s += data.entries()[o].z;
    q.empirical_mean(static_cast<Eigen::Index>(i)) = s / static_cast<double>(obs.size());
  }
  return q;
}

Eigen::MatrixXd rubric_quality_means(const PosteriorSamples& samples, const ItemTable& items,
                                     const SpatialBasis& basis, int workers) {
  require_factors(samples);
  if (samples.draws.empty()) throw Error(ErrorKind::InvalidState, "no retained draws");
  const auto I = static_cast<Eigen::Index>(items.items());
  const int M = samples.draws.front().rubric_count();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(I, M);
  parallel_for(items.items(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      for (const Draw& d : samples.draws) {
        const double xi = item_fixed_effect(d, items, basis, i);
        const double bn = beta_norm(d, i);
        for (int m = 0; m < M; ++m)
          out(static_cast<Eigen::Index>(i), m) += expected_rating_under(xi, bn, d.rubric(m));
      }
  });
  return out / static_cast<double>(samples.draws.size());
}

Eigen::MatrixXd coclustering(const PosteriorSamples& samples) {
  if (samples.draws.empty()) throw Error(ErrorKind::InvalidState, "no retained draws");
  const auto U = static_cast<Eigen::Index>(samples.draws.front().classes.size());
  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(U, U);
  for (const Draw& d : samples.draws)
    for (Eigen::Index u = 0; u < U; ++u)
      for (Eigen::Index v = u; v < U; ++v)
        if (d.classes[static_cast<std::size_t>(u)] == d.classes[static_cast<std::size_t>(v)])
          pi(u, v) += 1.0;
  pi /= static_cast<double>(samples.draws.size());
  pi.triangularView<Eigen::StrictlyLower>() = pi.transpose();
  return pi;
}

double binder_loss(std::span<const int> assignment, const Eigen::MatrixXd& pi) {
  if (static_cast<Eigen::Index>(assignment.size()) != pi.rows())
    throw Error(ErrorKind::Configuration, "assignment length differs from the co-clustering size");
  double loss = 0.0;
  for (std::size_t u = 0; u < assignment.size(); ++u)
    for (std::size_t v = u + 1; v < assignment.size(); ++v) {
      const double same = assignment[u] == assignment[v] ? 1.0 : 0.0;
      loss += std::abs(same - pi(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)));
    }
  return loss;
}

std::vector<int> binder_cluster(const PosteriorSamples& samples, const Eigen::MatrixXd& pi) {
  if (samples.draws.empty()) throw Error(ErrorKind::InvalidState, "no retained draws");
  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < samples.draws.size(); ++t) {
    if (t > 0 && samples.draws[t].classes == samples.draws[t - 1].classes) continue;
    const double loss = binder_loss(samples.draws[t].classes, pi);
    if (loss < best_loss) {
      best_loss = loss;
      best = t;
    }
  }
  return samples.draws[best].classes;
}

std::vector<char> seen_users(const RatingsDataset& data) {
  std::vector<char> seen(data.users(), 0);
  for (std::size_t u = 0; u < data.users(); ++u) seen[u] = data.user_entries(u).empty() ? 0 : 1;
  return seen;
}

HeldoutResult heldout_loglik(const PosteriorSamples& samples, const RatingsDataset& test,
                             const ItemTable& items, const SpatialBasis& basis,
                             std::span<const char> seen, int workers) {
  require_factors(samples);
  if (samples.draws.empty()) throw Error(ErrorKind::InvalidState, "no retained draws");
  if (items.items() < test.items())
    throw Error(ErrorKind::Configuration, "test items missing from the item table");
  const std::size_t T = samples.draws.size();
  const int K = test.categories();
  for (const Draw& d : samples.draws)
    if (d.categories() != K)
      throw Error(ErrorKind::Configuration, "test data and chain disagree on K");

  HeldoutResult out;
  out.per_pair.assign(test.size(), 0.0);
  std::vector<std::vector<Rubric>> rubrics(T);
  for (std::size_t t = 0; t < T; ++t) rubrics[t] = rubrics_of(samples.draws[t]);

  parallel_for(test.size(), workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> terms(T);
    std::vector<double> mix;
    for (std::size_t n = begin; n < end; ++n) {
      const Rating& r = test.entries()[n];
      const bool known = seen.empty() || (r.user < seen.size() && seen[r.user]);
      for (std::size_t t = 0; t < T; ++t) {
        const Draw& d = samples.draws[t];
        const double xi = item_fixed_effect(d, items, basis, r.item);
        if (known) {
          if (r.user >= d.classes.size())
            throw Error(ErrorKind::Configuration, "test user outside the fitted population");
          double mu = xi;
          if (d.alpha.size() > 0)
            mu += d.alpha.row(static_cast<Eigen::Index>(r.user))
                      .dot(d.beta.row(static_cast<Eigen::Index>(r.item)));
          terms[t] = log_cell_probability_unchecked(
              rubrics[t][static_cast<std::size_t>(d.classes[r.user])], r.z, mu);
        } else {
          const double scale = std::sqrt(1.0 + std::pow(beta_norm(d, r.item), 2));
          mix.clear();
          for (int m = 0; m < d.rubric_count(); ++m) {
            const Rubric& rb = rubrics[t][static_cast<std::size_t>(m)];
            mix.push_back(std::log(d.weights(m)) +
                          normal::log_interval_probability((rb.lower(r.z) - xi) / scale,
                                                           (rb.upper(r.z) - xi) / scale));
          }
          terms[t] = log_sum_exp(mix);
        }
      }
      const double value = log_sum_exp(terms) - std::log(static_cast<double>(T));
      out.per_pair[n] = std::isfinite(value) ? std::max(value, kLogProbabilityFloor)
                                             : kLogProbabilityFloor;
    }
  });
  double total = 0.0;
  for (double v : out.per_pair) {
    if (v <= kLogProbabilityFloor) ++out.floored;
    total += v;
  }
  out.mean = test.size() ? total / static_cast<double>(test.size()) : 0.0;
  return out;
}

FieldSummary spatial_field_summary(const PosteriorSamples& samples, const SpatialBasis& basis,
                                   std::span<const Location> locations) {
  if (samples.draws.empty()) throw Error(ErrorKind::InvalidState, "no retained draws");
  const auto n = static_cast<Eigen::Index>(locations.size());
  const auto r = static_cast<Eigen::Index>(basis.rank());
  Eigen::MatrixXd psi(n, r);
  for (Eigen::Index j = 0; j < n; ++j)
    if (r > 0) psi.row(j) = basis.evaluate(locations[static_cast<std::size_t>(j)]).transpose();
  const auto T = static_cast<Eigen::Index>(samples.draws.size());
  Eigen::MatrixXd eta(r, T);
  for (Eigen::Index t = 0; t < T; ++t) eta.col(t) = samples.draws[static_cast<std::size_t>(t)].eta;
  FieldSummary out;
  if (r == 0) {
    out.mean = Eigen::VectorXd::Zero(n);
    out.sd = Eigen::VectorXd::Zero(n);
    return out;
  }
  const Eigen::VectorXd eta_mean = eta.rowwise().mean();
  out.mean = psi * eta_mean;
  const Eigen::MatrixXd centred = psi * (eta.colwise() - eta_mean);
  out.sd = (centred.array().square().rowwise().sum() / static_cast<double>(T)).sqrt();
  return out;
}

std::vector<RubricProfile> rubric_profile(std::span<const int> assignment, int rubrics,
                                          const RatingsDataset& data) {
  if (assignment.size() != data.users())
    throw Error(ErrorKind::Configuration, "assignment length differs from the user count");
  const int K = data.categories();
  std::vector<RubricProfile> out(static_cast<std::size_t>(rubrics));
  for (auto& p : out) p.proportions = Eigen::VectorXd::Zero(K);
  for (std::size_t u = 0; u < data.users(); ++u) {
    const int m = assignment[u];
    if (m < 0 || m >= rubrics)
      throw Error(ErrorKind::Configuration, "assignment label outside 0..M-1");
    RubricProfile& p = out[static_cast<std::size_t>(m)];
    ++p.users;
    for (std::size_t o : data.user_entries(u)) {
      p.proportions(data.entries()[o].z - 1) += 1.0;
      ++p.ratings;
    }
  }
  for (auto& p : out) {
    if (p.ratings > 0)
      p.proportions /= static_cast<double>(p.ratings);
    else
      p.proportions.setConstant(kNaN);
  }
  return out;
}

std::vector<int> hungarian_max(const Eigen::MatrixXd& score) {
  const auto n = static_cast<int>(score.rows());
  if (score.cols() != score.rows()) throw Error(ErrorKind::Configuration, "score matrix not square");
  // shortest augmenting path with potentials on cost = -score (1-based arrays)
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> pu(static_cast<std::size_t>(n) + 1, 0.0), pv(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0), owner(static_cast<std::size_t>(n) + 1, 0);
  for (int row = 1; row <= n; ++row) {
    owner[0] = row;
    int col0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(col0)] = 1;
      const int r0 = owner[static_cast<std::size_t>(col0)];
      double delta = inf;
      int col1 = 0;
      for (int c = 1; c <= n; ++c) {
        if (used[static_cast<std::size_t>(c)]) continue;
        const double cur = -score(r0 - 1, c - 1) - pu[static_cast<std::size_t>(r0)] -
                           pv[static_cast<std::size_t>(c)];
        if (cur < minv[static_cast<std::size_t>(c)]) {
          minv[static_cast<std::size_t>(c)] = cur;
          way[static_cast<std::size_t>(c)] = col0;
        }
        if (minv[static_cast<std::size_t>(c)] < delta) {
          delta = minv[static_cast<std::size_t>(c)];
          col1 = c;
        }
      }
      for (int c = 0; c <= n; ++c) {
        if (used[static_cast<std::size_t>(c)]) {
          pu[static_cast<std::size_t>(owner[static_cast<std::size_t>(c)])] += delta;
          pv[static_cast<std::size_t>(c)] -= delta;
        } else {
          minv[static_cast<std::size_t>(c)] -= delta;
        }
      }
      col0 = col1;
    } while (owner[static_cast<std::size_t>(col0)] != 0);
    do {
      const int col1 = way[static_cast<std::size_t>(col0)];
      owner[static_cast<std::size_t>(col0)] = owner[static_cast<std::size_t>(col1)];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<int> match(static_cast<std::size_t>(n), -1);
  for (int c = 1; c <= n; ++c)
    if (owner[static_cast<std::size_t>(c)] > 0)
      match[static_cast<std::size_t>(owner[static_cast<std::size_t>(c)] - 1)] = c - 1;
  return match;
}

double matched_accuracy(std::span<const int> truth, std::span<const int> estimate) {
  if (truth.size() != estimate.size())
    throw Error(ErrorKind::Configuration, "label vectors differ in length");
  if (truth.empty()) return 1.0;
  int n = 0;
  for (std::size_t u = 0; u < truth.size(); ++u) n = std::max({n, truth[u] + 1, estimate[u] + 1});
  Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t u = 0; u < truth.size(); ++u) confusion(estimate[u], truth[u]) += 1.0;
  const std::vector<int> match = hungarian_max(confusion);
  double hits = 0.0;
  for (int e = 0; e < n; ++e) hits += confusion(e, match[static_cast<std::size_t>(e)]);
  return hits / static_cast<double>(truth.size());
}

std::vector<int> modal_assignment(const PosteriorSamples& samples) {
  if (samples.draws.empty()) throw Error(ErrorKind::InvalidState, "no retained draws");
  const std::size_t U = samples.draws.front().classes.size();
  const int M = samples.draws.front().rubric_count();
  std::vector<int> out(U, 0);
  std::vector<std::size_t> counts(static_cast<std::size_t>(M));
  for (std::size_t u = 0; u < U; ++u) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const Draw& d : samples.draws) ++counts[static_cast<std::size_t>(d.classes[u])];
    out[u] = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  return out;
}

Eigen::VectorXd occupancy(const Draw& draw) {
  Eigen::VectorXd occ = Eigen::VectorXd::Zero(draw.rubric_count());
  for (int c : draw.classes) occ(c) += 1.0;
  if (!draw.classes.empty()) occ /= static_cast<double>(draw.classes.size());
  return occ;
}

namespace {

std::string id_of(std::span<const std::string> ids, std::size_t i) {
  return i < ids.size() ? ids[i] : std::to_string(i);
}

std::string number(double x) {
  if (std::isnan(x)) return "NA";
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

}  // namespace

void export_quality_csv(const ItemQuality& quality, std::span<const std::string> item_ids,
                        const std::filesystem::path& path) {
  std::ostringstream s;
  s << "item_id,lambda_mean,lambda_sd,empirical_mean,count\n";
  for (Eigen::Index i = 0; i < quality.mean.size(); ++i)
    s << id_of(item_ids, static_cast<std::size_t>(i)) << ',' << number(quality.mean(i)) << ','
      << number(quality.sd(i)) << ',' << number(quality.empirical_mean(i)) << ','
      << quality.counts[static_cast<std::size_t>(i)] << '\n';
  write_file_atomic(path, s.str());
}

void export_rubric_quality_csv(const Eigen::MatrixXd& means, std::span<const std::string> item_ids,
                               const std::filesystem::path& path) {
  std::ostringstream s;
  s << "item_id,rubric,lambda_mean\n";
  for (Eigen::Index i = 0; i < means.rows(); ++i)
    for (Eigen::Index m = 0; m < means.cols(); ++m)
      s << id_of(item_ids, static_cast<std::size_t>(i)) << ',' << m + 1 << ','
        << number(means(i, m)) << '\n';
  write_file_atomic(path, s.str());
}

void export_profiles_csv(const std::vector<RubricProfile>& profiles,
                         const std::filesystem::path& path) {
  std::ostringstream s;
  s << "rubric,users,ratings,category,proportion\n";
  for (std::size_t m = 0; m < profiles.size(); ++m)
    for (Eigen::Index k = 0; k < profiles[m].proportions.size(); ++k)
      s << m + 1 << ',' << profiles[m].users << ',' << profiles[m].ratings << ',' << k + 1 << ','
        << number(profiles[m].proportions(k)) << '\n';
  write_file_atomic(path, s.str());
}

void export_field_csv(const FieldSummary& field, std::span<const Location> locations,
                      const std::filesystem::path& path) {
  std::ostringstream s;
  s << "longitude,latitude,field_mean,field_sd\n";
  for (std::size_t j = 0; j < locations.size(); ++j)
    s << number(locations[j].longitude) << ',' << number(locations[j].latitude) << ','
      << number(field.mean(static_cast<Eigen::Index>(j))) << ','
      << number(field.sd(static_cast<Eigen::Index>(j))) << '\n';
  write_file_atomic(path, s.str());
}

}  // namespace mrubric
