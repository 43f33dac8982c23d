// Command-line front end: fit, predict, summarize, simulate, tau-study,
// factor-study. Every run writes manifest.json into its output directory.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrubric/analysis.hpp"
#include "mrubric/errors.hpp"
#include "mrubric/io.hpp"
#include "mrubric/sampler.hpp"
#include "mrubric/simulation.hpp"
#include "mrubric/spatial.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mrubric;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

// Settings outside Hyperparameters and IngestFilter.
struct RunSettings {
  int categories = 5;
  int workers = 1;
  double test_fraction = 0.0;
  std::uint64_t split_seed = 1;
  bool keep_factors = true;
  int log_every = 0;
  int checkpoint_every = 0;
  int cache_check_every = 0;
  EigenMethod eigen = EigenMethod::Auto;
};

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::Configuration, "config key " + key + ": not an integer: '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::Configuration, "config key " + key + ": not a number: '" + v + "'");
}

RunSettings run_settings(const Config& c) {
  RunSettings s;
  for (const auto& [key, v] : c) {
    if (key == "categories") s.categories = static_cast<int>(to_int(key, v));
    else if (key == "workers") s.workers = static_cast<int>(to_int(key, v));
    else if (key == "test_fraction") s.test_fraction = to_double(key, v);
    else if (key == "split_seed") s.split_seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "log_every") s.log_every = static_cast<int>(to_int(key, v));
    else if (key == "checkpoint_every") s.checkpoint_every = static_cast<int>(to_int(key, v));
    else if (key == "cache_check_every") s.cache_check_every = static_cast<int>(to_int(key, v));
    else if (key == "keep_factors") {
      if (v == "true" || v == "1") s.keep_factors = true;
      else if (v == "false" || v == "0") s.keep_factors = false;
      else throw Error(ErrorKind::Configuration, "config key keep_factors: expected true or false");
    } else if (key == "eigen_method") {
      if (v == "auto") s.eigen = EigenMethod::Auto;
      else if (v == "dense") s.eigen = EigenMethod::Dense;
      else if (v == "iterative") s.eigen = EigenMethod::Iterative;
      else throw Error(ErrorKind::Configuration, "config key eigen_method: expected auto, dense or iterative");
    }
  }
  if (s.categories < 2) throw Error(ErrorKind::Configuration, "categories must be at least 2");
  if (s.workers < 1) throw Error(ErrorKind::Configuration, "workers must be at least 1");
  if (!(s.test_fraction >= 0.0 && s.test_fraction < 1.0))
    throw Error(ErrorKind::Configuration, "test_fraction must lie in [0, 1)");
  return s;
}

// Input paths travel in the manifest config under these keys.
const char* kRatingsKey = "input_ratings";
const char* kItemsKey = "input_items";

Config model_keys(const Config& c) {
  Config out = c;
  out.erase(kRatingsKey);
  out.erase(kItemsKey);
  return out;
}

struct Context {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::string output;
  Config config;  // file values with flag overrides applied
  Hyperparameters hyper;
  IngestFilter filter;
  RunSettings run;
  RunManifest manifest;
  std::chrono::steady_clock::time_point started;

  void load() {
    if (!config_path.empty()) {
      config = read_config(config_path);
      manifest.input_digests[config_path] = sha256_file(config_path);
    }
    for (const auto& [k, v] : overrides) config[k] = v;
    apply_config(model_keys(config), hyper, filter);
    run = run_settings(config);
    fs::create_directories(output);
    manifest.started = utc_timestamp();
    manifest.seeds["chain"] = hyper.seed;
    manifest.seeds["split"] = run.split_seed;
    started = std::chrono::steady_clock::now();
  }

  fs::path out(const std::string& name) const { return fs::path(output) / name; }

  void finish(const std::string& command) {
    manifest.command = command;
    manifest.config = config;
    manifest.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_manifest(manifest, out("manifest.json"));
  }
};

// Data, split and basis as a fit sees them; rebuilt identically by later commands.
struct Prepared {
  IngestedData in;
  RatingsDataset train;
  RatingsDataset test;
  SpatialBasis basis;
};

Prepared prepare(const Config& config, const Hyperparameters& h, const IngestFilter& f,
                 const RunSettings& run) {
  Prepared p;
  p.in = ingest(config.at(kRatingsKey), config.at(kItemsKey), f, run.categories);
  if (run.test_fraction > 0.0) {
    auto [train, test] = split_train_test(p.in.data, 1.0 - run.test_fraction, run.split_seed);
    p.train = std::move(train);
    p.test = std::move(test);
  } else {
    p.train = p.in.data;
    p.test = p.in.data.subset({});
  }
  p.basis = build_basis(p.in.items.locations, h.bandwidth, h.rank_rule, run.eigen);
  return p;
}

void write_pairs(const RatingsDataset& data, const IngestedData& in, const fs::path& path) {
  std::ostringstream s;
  s << "user_id,item_id,stars\n";
  for (const Rating& r : data.entries()) s << in.user_ids[r.user] << ',' << in.item_ids[r.item] << ',' << r.z << '\n';
  write_file_atomic(path, s.str());
}

json heldout_json(const HeldoutResult& h) {
  return json{{"mean", h.mean}, {"pairs", h.per_pair.size()}, {"floored", h.floored}};
}

// ---------------------------------------------------------------- fit

int cmd_fit(Context& ctx, const std::string& ratings, const std::string& items, bool resume) {
  ctx.config[kRatingsKey] = ratings;
  ctx.config[kItemsKey] = items;
  ctx.load();
  ctx.manifest.input_digests[ratings] = sha256_file(ratings);
  ctx.manifest.input_digests[items] = sha256_file(items);
  const Prepared p = prepare(ctx.config, ctx.hyper, ctx.filter, ctx.run);
  std::clog << "ratings " << p.in.data.size() << " (train " << p.train.size() << ", test "
            << p.test.size() << "), users " << p.in.data.users() << ", items " << p.in.data.items()
            << ", basis rank " << p.basis.rank() << '\n';

  ChainOptions o;
  o.workers = ctx.run.workers;
  o.keep_factors = ctx.run.keep_factors;
  o.log_every = ctx.run.log_every;
  o.cache_check_every = ctx.run.cache_check_every;
  o.checkpoint_every = ctx.run.checkpoint_every;
  const fs::path checkpoint = ctx.out("checkpoint");
  if (o.checkpoint_every > 0)
    o.on_checkpoint = [&](const ChainCheckpoint& cp) { save_checkpoint(cp, checkpoint); };
  if (resume) o.resume = load_checkpoint(checkpoint);
  const PosteriorSamples samples = run_chain(p.train, p.in.items, p.basis, ctx.hyper, o);

  persist_samples(samples, ctx.out("samples"));
  write_ids(p.in.user_ids, ctx.out("user_ids.csv"));
  write_ids(p.in.item_ids, ctx.out("item_ids.csv"));
  export_spectrum_csv(p.basis, ctx.out("spectrum.csv"));
  json report{{"draws", samples.draws.size()},
              {"acceptance_rates", samples.meta.acceptance_rates},
              {"laplace_fallbacks", samples.meta.laplace_fallbacks},
              {"basis_rank", p.basis.rank()},
              {"captured_fraction", p.basis.captured_fraction()},
              {"seconds", samples.meta.seconds}};
  if (p.test.size() > 0) {
    write_pairs(p.test, p.in, ctx.out("test_pairs.csv"));
    const HeldoutResult h = heldout_loglik(samples, p.test, p.in.items, p.basis, seen_users(p.train), ctx.run.workers);
    report["heldout"] = heldout_json(h);
    std::clog << "held-out log-likelihood " << h.mean << " over " << h.per_pair.size() << " pairs\n";
  }
  write_file_atomic(ctx.out("fit.json"), report.dump(2) + "\n");
  ctx.finish("fit");
  return 0;
}

// ---------------------------------------------------------------- reloading a fit

struct Fitted {
  RunManifest manifest;
  Prepared prepared;
  PosteriorSamples samples;
  Hyperparameters hyper;
  RunSettings run;
};

Fitted reload(const fs::path& run_dir) {
  Fitted f;
  f.manifest = read_manifest(run_dir / "manifest.json");
  if (f.manifest.command != "fit")
    throw Error(ErrorKind::Configuration, run_dir.string() + " does not hold a fit");
  verify_inputs(f.manifest);
  IngestFilter filter;
  apply_config(model_keys(f.manifest.config), f.hyper, filter);
  f.run = run_settings(f.manifest.config);
  f.prepared = prepare(f.manifest.config, f.hyper, filter, f.run);
  f.samples = load_samples(run_dir / "samples");
  return f;
}

// Ratings in the ingest schema mapped onto the fit's indices. Unknown items are
// an error; unknown users get fresh indices past the fitted population.
RatingsDataset map_ratings(const fs::path& path, const IngestedData& in, int K,
                           std::vector<std::string>& user_names) {
  std::map<std::string, std::uint32_t> users, items;
  for (std::size_t u = 0; u < in.user_ids.size(); ++u) users[in.user_ids[u]] = static_cast<std::uint32_t>(u);
  for (std::size_t i = 0; i < in.item_ids.size(); ++i) items[in.item_ids[i]] = static_cast<std::uint32_t>(i);
  user_names = in.user_ids;
  std::istringstream text(read_file(path));
  std::string line;
  std::getline(text, line);
  std::vector<Rating> out;
  std::size_t number = 1;
  while (std::getline(text, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() < 3) throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(number) + ": expected user_id,item_id,stars");
    const auto item = items.find(f[1]);
    if (item == items.end())
      throw Error(ErrorKind::Configuration, path.string() + ":" + std::to_string(number) + ": item '" + f[1] + "' is not in the fit");
    auto user = users.find(f[0]);
    if (user == users.end()) {
      user = users.emplace(f[0], static_cast<std::uint32_t>(user_names.size())).first;
      user_names.push_back(f[0]);
    }
    out.push_back({item->second, user->second, static_cast<int>(to_int("stars", f[2]))});
  }
  return RatingsDataset(std::move(out), K, in.items.items(), user_names.size());
}

// ---------------------------------------------------------------- predict

int cmd_predict(Context& ctx, const std::string& run_dir, const std::string& pairs_path) {
  const Fitted f = reload(run_dir);
  ctx.config = f.manifest.config;
  ctx.config["run"] = run_dir;
  fs::create_directories(ctx.output);
  ctx.manifest.started = utc_timestamp();
  ctx.manifest.seeds = f.manifest.seeds;
  ctx.manifest.input_digests = f.manifest.input_digests;
  ctx.started = std::chrono::steady_clock::now();

  const int K = f.run.categories;
  std::vector<std::string> user_names = f.prepared.in.user_ids;
  RatingsDataset pairs = f.prepared.test;
  if (!pairs_path.empty()) {
    ctx.config["input_pairs"] = pairs_path;
    ctx.manifest.input_digests[pairs_path] = sha256_file(pairs_path);
    pairs = map_ratings(pairs_path, f.prepared.in, K, user_names);
  }
  if (pairs.size() == 0) throw Error(ErrorKind::Configuration, "no pairs to predict; fit with test_fraction > 0 or pass --pairs");
  const std::vector<char> seen = seen_users(f.prepared.train);
  const HeldoutResult observed = heldout_loglik(f.samples, pairs, f.prepared.in.items, f.prepared.basis, seen, f.run.workers);

  // predictive probability of each category, scored as if it had been observed
  Eigen::MatrixXd prob(static_cast<Eigen::Index>(pairs.size()), K);
  for (int k = 1; k <= K; ++k) {
    std::vector<Rating> as_k = pairs.entries();
    for (Rating& r : as_k) r.z = k;
    const RatingsDataset d(std::move(as_k), K, pairs.items(), pairs.users());
    const HeldoutResult h = heldout_loglik(f.samples, d, f.prepared.in.items, f.prepared.basis, seen, f.run.workers);
    for (std::size_t n = 0; n < h.per_pair.size(); ++n) prob(static_cast<Eigen::Index>(n), k - 1) = std::exp(h.per_pair[n]);
  }
  std::ostringstream s;
  s << "user_id,item_id,stars,seen";
  for (int k = 1; k <= K; ++k) s << ",p" << k;
  s << ",expected,log_score\n";
  char buf[64];
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const Rating& r = pairs.entries()[n];
    const bool known = r.user < seen.size() && seen[r.user];
    s << user_names[r.user] << ',' << f.prepared.in.item_ids[r.item] << ',' << r.z << ',' << (known ? 1 : 0);
    double expected = 0.0;
    for (int k = 1; k <= K; ++k) {
      const double p = prob(static_cast<Eigen::Index>(n), k - 1);
      expected += k * p;
      std::snprintf(buf, sizeof buf, ",%.17g", p);
      s << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", expected, observed.per_pair[n]);
    s << buf;
  }
  write_file_atomic(ctx.out("predictions.csv"), s.str());
  write_file_atomic(ctx.out("heldout.json"), heldout_json(observed).dump(2) + "\n");
  std::clog << "held-out log-likelihood " << observed.mean << " over " << pairs.size() << " pairs\n";
  ctx.finish("predict");
  return 0;
}

// ---------------------------------------------------------------- summarize

int cmd_summarize(Context& ctx, const std::string& run_dir) {
  const Fitted f = reload(run_dir);
  ctx.config = f.manifest.config;
  ctx.config["run"] = run_dir;
  fs::create_directories(ctx.output);
  ctx.manifest.started = utc_timestamp();
  ctx.manifest.seeds = f.manifest.seeds;
  ctx.manifest.input_digests = f.manifest.input_digests;
  ctx.started = std::chrono::steady_clock::now();

  const Prepared& p = f.prepared;
  const PosteriorSamples& s = f.samples;
  const int M = s.meta.rubrics;
  const Eigen::MatrixXd pi = coclustering(s);
  const std::vector<int> partition = binder_cluster(s, pi);
  const std::vector<int> modal = modal_assignment(s);
  export_profiles_csv(rubric_profile(partition, M, p.train), ctx.out("profiles.csv"));
  {
    std::ostringstream a;
    a << "user_id,binder_rubric,modal_rubric\n";
    for (std::size_t u = 0; u < partition.size(); ++u)
      a << p.in.user_ids[u] << ',' << partition[u] + 1 << ',' << modal[u] + 1 << '\n';
    write_file_atomic(ctx.out("assignments.csv"), a.str());
  }
  export_field_csv(spatial_field_summary(s, p.basis, p.in.items.locations), p.in.items.locations,
                   ctx.out("field.csv"));
  json report{{"draws", s.draws.size()},
              {"binder_loss", binder_loss(partition, pi)},
              {"acceptance_rates", s.meta.acceptance_rates}};
  if (s.meta.factors > 0 && !s.meta.factors_kept) {
    std::clog << "item quality skipped: the fit did not keep the factor draws\n";
    report["quality"] = "skipped: factor draws not kept";
  } else {
    export_quality_csv(quality_summary(s, p.train, p.in.items, p.basis, f.run.workers), p.in.item_ids,
                       ctx.out("quality.csv"));
    export_rubric_quality_csv(rubric_quality_means(s, p.in.items, p.basis, f.run.workers), p.in.item_ids,
                              ctx.out("rubric_quality.csv"));
  }
  std::vector<double> occ;
  const Eigen::VectorXd o = occupancy(s.draws.back());
  for (Eigen::Index m = 0; m < o.size(); ++m) occ.push_back(o(m));
  report["final_occupancy"] = occ;
  write_file_atomic(ctx.out("summary.json"), report.dump(2) + "\n");
  ctx.finish("summarize");
  return 0;
}

// ---------------------------------------------------------------- simulate

void write_simulation(const SimulatedData& sim, Context& ctx) {
  const auto user_id = [](std::size_t u) {
    char b[32];
    std::snprintf(b, sizeof b, "u%06zu", u);
    return std::string(b);
  };
  const auto item_id = [](std::size_t i) {
    char b[32];
    std::snprintf(b, sizeof b, "i%06zu", i);
    return std::string(b);
  };
  std::ostringstream r;
  r << "user_id,item_id,stars,date\n";
  for (const Rating& x : sim.data.entries()) r << user_id(x.user) << ',' << item_id(x.item) << ',' << x.z << ",2015-01-01\n";
  write_file_atomic(ctx.out("ratings.csv"), r.str());
  std::ostringstream it;
  it << "item_id,longitude,latitude";
  for (Eigen::Index j = 0; j < sim.items.covariates.cols(); ++j) it << ",x" << j + 1;
  it << '\n';
  char buf[64];
  for (std::size_t i = 0; i < sim.items.items(); ++i) {
    it << item_id(i);
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g", sim.items.locations[i].longitude, sim.items.locations[i].latitude);
    it << buf;
    for (Eigen::Index j = 0; j < sim.items.covariates.cols(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", sim.items.covariates(static_cast<Eigen::Index>(i), j));
      it << buf;
    }
    it << '\n';
  }
  write_file_atomic(ctx.out("items.csv"), it.str());
  std::ostringstream c;
  c << "user_id,rubric\n";
  for (std::size_t u = 0; u < sim.truth.classes.size(); ++u) c << user_id(u) << ',' << sim.truth.classes[u] + 1 << '\n';
  write_file_atomic(ctx.out("true_classes.csv"), c.str());
  json truth;
  for (const Rubric& rb : sim.truth.rubrics)
    truth["rubrics"].push_back(std::vector<double>(rb.breaks().data(), rb.breaks().data() + rb.breaks().size()));
  for (const Eigen::VectorXd& p : sim.rubric_probs)
    truth["rubric_probs"].push_back(std::vector<double>(p.data(), p.data() + p.size()));
  truth["weights"] = std::vector<double>(sim.truth.weights.data(), sim.truth.weights.data() + sim.truth.weights.size());
  truth["gamma"] = std::vector<double>(sim.truth.gamma.data(), sim.truth.gamma.data() + sim.truth.gamma.size());
  truth["sigma_b"] = sim.truth.sigma_b;
  truth["sigma_beta"] = sim.truth.sigma_beta;
  truth["sigma_eta"] = sim.truth.sigma_eta;
  truth["factors"] = sim.truth.factors();
  truth["spatial"] = "synthetic eta over a synthetic knot layout; pairs drawn uniformly at random";
  write_file_atomic(ctx.out("truth.json"), truth.dump(2) + "\n");
}

int cmd_simulate(Context& ctx, const std::string& preset, double tau, std::uint64_t seed, std::size_t pool) {
  ctx.load();
  SimConfig c;
  if (preset == "tau") c = tau_study_config(tau, seed);
  else if (preset == "factor") c = factor_study_config(seed);
  else throw Error(ErrorKind::Configuration, "unknown preset '" + preset + "' (expected tau or factor)");
  if (pool > 0) c.pool_size = pool;
  ctx.config["preset"] = preset;
  ctx.config["tau"] = std::to_string(tau);
  ctx.config["pool_size"] = std::to_string(c.pool_size);
  ctx.manifest.seeds["simulation"] = seed;
  write_simulation(generate_dataset(c), ctx);
  ctx.finish("simulate");
  return 0;
}

// ---------------------------------------------------------------- studies

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(to_double("list", cell));
  return out;
}

FitConfig fit_config(const Context& ctx) {
  FitConfig fit;
  fit.hyper = ctx.hyper;
  fit.bandwidth = ctx.hyper.bandwidth;
  fit.rank_rule = ctx.hyper.rank_rule;
  fit.workers = ctx.run.workers;
  if (ctx.config.count("test_fraction")) fit.test_fraction = ctx.run.test_fraction;
  return fit;
}

int cmd_tau_study(Context& ctx, const std::string& taus_text, std::uint64_t seed, int parallel) {
  ctx.load();
  const std::vector<double> taus = parse_list(taus_text);
  for (double t : taus)
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::Configuration, "tau values must lie in [0, 1]");
  ctx.config["taus"] = taus_text;
  ctx.config["parallel"] = std::to_string(parallel);
  ctx.manifest.seeds["simulation"] = seed;
  const auto rows = run_tau_study(taus, fit_config(ctx), seed, parallel);
  std::ostringstream s;
  s << "tau,heldout_multi,heldout_single,delta,delta_se,correct_assignment,top_two_occupancy,seconds\n";
  char buf[256];
  for (const TauRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.2f,%.10g,%.10g,%.10g,%.10g,%.6f,%.6f,%.1f\n", r.tau, r.heldout_multi,
                  r.heldout_single, r.delta, r.delta_se, r.correct_assignment, r.top_two_occupancy, r.seconds);
    s << buf;
  }
  write_file_atomic(ctx.out("tau_study.csv"), s.str());
  std::ostringstream occ;
  occ << "tau,rank,occupancy\n";
  for (const TauRow& r : rows)
    for (Eigen::Index m = 0; m < r.occupancy.size(); ++m) occ << r.tau << ',' << m + 1 << ',' << r.occupancy(m) << '\n';
  write_file_atomic(ctx.out("tau_occupancy.csv"), occ.str());
  std::ostringstream prof;
  prof << "tau,source,k,probability\n";
  for (const TauRow& r : rows) {
    for (std::size_t j = 0; j < r.profiles.size(); ++j)
      for (Eigen::Index k = 0; k < r.profiles[j].size(); ++k)
        prof << r.tau << ",fitted" << j + 1 << ',' << k + 1 << ',' << r.profiles[j](k) << '\n';
    for (std::size_t j = 0; j < r.true_probs.size(); ++j)
      for (Eigen::Index k = 0; k < r.true_probs[j].size(); ++k)
        prof << r.tau << ",true" << j + 1 << ',' << k + 1 << ',' << r.true_probs[j](k) << '\n';
  }
  write_file_atomic(ctx.out("tau_profiles.csv"), prof.str());
  ctx.finish("tau-study");
  return 0;
}

int cmd_factor_study(Context& ctx, const std::string& seeds_text, int max_factors, int parallel) {
  ctx.load();
  ctx.config["seeds"] = seeds_text;
  ctx.config["max_factors"] = std::to_string(max_factors);
  ctx.config["parallel"] = std::to_string(parallel);
  std::ostringstream s, z;
  s << "seed,factors,heldout,seconds\n";
  z << "seed,draw,item,zeta\n";
  json best;
  for (double sd : parse_list(seeds_text)) {
    const auto seed = static_cast<std::uint64_t>(sd);
    ctx.manifest.seeds["simulation_" + std::to_string(seed)] = seed;
    const FactorStudy study = run_factor_recovery_study(fit_config(ctx), seed, max_factors, parallel);
    for (const FactorRow& r : study.rows) s << seed << ',' << r.factors << ',' << r.heldout << ',' << r.seconds << '\n';
    for (Eigen::Index t = 0; t < study.zeta.rows(); ++t)
      for (Eigen::Index j = 0; j < study.zeta.cols(); ++j)
        z << seed << ',' << t << ',' << study.zeta_items[static_cast<std::size_t>(j)] << ',' << study.zeta(t, j) << '\n';
    best[std::to_string(seed)] = study.best_factors;
  }
  write_file_atomic(ctx.out("factor_study.csv"), s.str());
  write_file_atomic(ctx.out("zeta.csv"), z.str());
  write_file_atomic(ctx.out("best_factors.json"), best.dump(2) + "\n");
  ctx.finish("factor-study");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-rubric ordinal rating model"};
  app.require_subcommand(1);
  app.fallthrough();
  Context ctx;
  const char* env_out = std::getenv("MRUBRIC_OUTPUT_DIR");
  ctx.output = env_out && *env_out ? env_out : "mrubric_output";
  app.add_option("-c,--config", ctx.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("-o,--output", ctx.output, "output directory (default $MRUBRIC_OUTPUT_DIR or ./mrubric_output)");
  for (const std::string& key : config_keys())
    app.add_option_function<std::string>(
        "--" + key, [&ctx, key](const std::string& v) { ctx.overrides[key] = v; },
        "override config key " + key);

  std::string ratings, items, run_dir, pairs, preset = "tau", taus = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1", seeds = "1,2,3,4,5";
  bool resume = false;
  double tau = 0.0;
  std::uint64_t sim_seed = 1;
  std::size_t pool = 0;
  int parallel = 1, max_factors = 7;

  auto* fit = app.add_subcommand("fit", "fit the model to a ratings file");
  fit->add_option("--ratings", ratings, "ratings CSV: user_id,item_id,stars,date")->required()->check(CLI::ExistingFile);
  fit->add_option("--items", items, "items CSV: item_id,longitude,latitude,covariates...")->required()->check(CLI::ExistingFile);
  fit->add_flag("--resume", resume, "continue from the checkpoint in the output directory");

  auto* predict = app.add_subcommand("predict", "posterior predictive probabilities for rating pairs");
  predict->add_option("--run", run_dir, "output directory of a fit")->required();
  predict->add_option("--pairs", pairs, "ratings CSV to score (default: the fit's held-out pairs)")->check(CLI::ExistingFile);

  auto* summarize = app.add_subcommand("summarize", "item quality, rubric profiles and spatial field of a fit");
  summarize->add_option("--run", run_dir, "output directory of a fit")->required();

  auto* simulate = app.add_subcommand("simulate", "write a synthetic dataset in the ingest schema");
  simulate->add_option("--preset", preset, "tau or factor")->check(CLI::IsMember({"tau", "factor"}));
  simulate->add_option("--tau", tau, "interpolation weight for the tau preset")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--sim-seed", sim_seed, "generator seed");
  simulate->add_option("--pool-size", pool, "normal pool size for break-point quantiles");

  auto* tau_study = app.add_subcommand("tau-study", "single- versus multi-rubric fits over a tau grid");
  tau_study->add_option("--taus", taus, "comma-separated tau values");
  tau_study->add_option("--sim-seed", sim_seed, "generator seed");
  tau_study->add_option("--parallel", parallel, "cells fitted concurrently")->check(CLI::PositiveNumber);

  auto* factor_study = app.add_subcommand("factor-study", "held-out log-likelihood over the number of factors");
  factor_study->add_option("--seeds", seeds, "comma-separated generator seeds");
  factor_study->add_option("--max-factors", max_factors, "largest L fitted")->check(CLI::PositiveNumber);
  factor_study->add_option("--parallel", parallel, "fits run concurrently")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*fit) return cmd_fit(ctx, ratings, items, resume);
    if (*predict) return cmd_predict(ctx, run_dir, pairs);
    if (*summarize) return cmd_summarize(ctx, run_dir);
    if (*simulate) return cmd_simulate(ctx, preset, tau, sim_seed, pool);
    if (*tau_study) return cmd_tau_study(ctx, taus, sim_seed, parallel);
    if (*factor_study) return cmd_factor_study(ctx, seeds, max_factors, parallel);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return e.numerical() ? kExitNumerical : kExitValidation;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: incomplete run manifest: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
