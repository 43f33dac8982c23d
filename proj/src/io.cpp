#include "mrubric/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "mrubric/errors.hpp"
#include "mrubric/rng.hpp"

namespace mrubric {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int j = 0; j < length; ++j) {
    out.push_back(hex[digest[j] >> 4]);
    out.push_back(hex[digest[j] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t j = 0; j < line.size(); ++j) {
    const char c = line[j];
    if (quoted) {
      if (c == '"') {
        if (j + 1 < line.size() && line[j + 1] == '"') {
          cur.push_back('"');
          ++j;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  CsvTable t;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    for (auto& f : fields) f = trim(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(number) + ": expected " +
                                        std::to_string(t.header.size()) + " fields, found " +
                                        std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.lines.push_back(number);
  }
  if (t.header.empty()) throw Error(ErrorKind::Parse, path.string() + ": empty file");
  return t;
}

std::size_t column(const CsvTable& t, const std::string& name, const fs::path& path) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end())
    throw Error(ErrorKind::Parse, path.string() + ": missing required column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw Error(ErrorKind::Parse, where + ": cannot parse number '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& where) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw Error(ErrorKind::Parse, where + ": cannot parse integer '" + s + "'");
  return v;
}

bool valid_date(const std::string& d) {
  if (d.size() < 10) return false;
  for (int j : {0, 1, 2, 3, 5, 6, 8, 9})
    if (!std::isdigit(static_cast<unsigned char>(d[static_cast<std::size_t>(j)]))) return false;
  return d[4] == '-' && d[7] == '-';
}

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace

// ---------------------------------------------------------------- ingest

void IngestFilter::validate() const {
  if (min_user_ratings < 1 || min_item_ratings < 1)
    throw Error(ErrorKind::Configuration, "minimum rating counts must be at least 1");
  if (date_from && !valid_date(*date_from))
    throw Error(ErrorKind::Configuration, "date_from is not YYYY-MM-DD: " + *date_from);
  if (date_to && !valid_date(*date_to))
    throw Error(ErrorKind::Configuration, "date_to is not YYYY-MM-DD: " + *date_to);
  if (date_from && date_to && *date_from > *date_to)
    throw Error(ErrorKind::Configuration, "date_from is after date_to");
  if (box && (box->lon_min > box->lon_max || box->lat_min > box->lat_max))
    throw Error(ErrorKind::Configuration, "bounding box bounds are not ordered");
}

IngestedData ingest(const fs::path& ratings_path, const fs::path& items_path,
                    const IngestFilter& filter, int categories, bool standardize) {
  filter.validate();

  const CsvTable it = read_csv(items_path);
  const std::size_t c_item = column(it, "item_id", items_path);
  const std::size_t c_lon = column(it, "longitude", items_path);
  const std::size_t c_lat = column(it, "latitude", items_path);
  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names;
  for (std::size_t j = 0; j < it.header.size(); ++j)
    if (j != c_item && j != c_lon && j != c_lat) {
      cov_cols.push_back(j);
      cov_names.push_back(it.header[j]);
    }

  struct ItemRow {
    Location loc;
    std::vector<double> cov;
  };
  std::map<std::string, ItemRow> item_rows;
  for (std::size_t n = 0; n < it.rows.size(); ++n) {
    const auto& row = it.rows[n];
    const std::string where = items_path.string() + ":" + std::to_string(it.lines[n]);
    ItemRow r;
    r.loc = {parse_double(row[c_lon], where), parse_double(row[c_lat], where)};
    for (std::size_t j : cov_cols) r.cov.push_back(parse_double(row[j], where));
    if (filter.box && !filter.box->contains(r.loc)) continue;
    if (!item_rows.emplace(row[c_item], std::move(r)).second)
      throw Error(ErrorKind::Parse, where + ": duplicate item_id '" + row[c_item] + "'");
  }

  const CsvTable rt = read_csv(ratings_path);
  const std::size_t c_user = column(rt, "user_id", ratings_path);
  const std::size_t c_ritem = column(rt, "item_id", ratings_path);
  const std::size_t c_stars = column(rt, "stars", ratings_path);
  const std::size_t c_date = column(rt, "date", ratings_path);

  struct Entry {
    std::string date;
    int stars;
  };
  std::map<std::pair<std::string, std::string>, Entry> latest;  // (user, item)
  for (std::size_t n = 0; n < rt.rows.size(); ++n) {
    const auto& row = rt.rows[n];
    const std::string where = ratings_path.string() + ":" + std::to_string(rt.lines[n]);
    const long long stars = parse_int(row[c_stars], where);
    if (stars < 1 || stars > categories)
      throw Error(ErrorKind::CategoryRange, where + ": stars " + std::to_string(stars) +
                                                " outside 1.." + std::to_string(categories));
    const std::string& date = row[c_date];
    if (!valid_date(date)) throw Error(ErrorKind::Parse, where + ": bad date '" + date + "'");
    const std::string day = date.substr(0, 10);
    if (filter.date_from && day < *filter.date_from) continue;
    if (filter.date_to && day > *filter.date_to) continue;
    if (!item_rows.count(row[c_ritem])) continue;
    Entry e{date, static_cast<int>(stars)};
    auto [pos, inserted] = latest.try_emplace({row[c_user], row[c_ritem]}, e);
    if (!inserted && std::tie(e.date, e.stars) > std::tie(pos->second.date, pos->second.stars))
      pos->second = e;
  }

  // iterate the count filters to a fixed point
  std::map<std::pair<std::string, std::string>, Entry> kept = std::move(latest);
  for (;;) {
    std::map<std::string, int> user_count, item_count;
    for (const auto& [key, e] : kept) {
      ++user_count[key.first];
      ++item_count[key.second];
    }
    std::size_t before = kept.size();
    std::erase_if(kept, [&](const auto& kv) {
      return user_count[kv.first.first] < filter.min_user_ratings ||
             item_count[kv.first.second] < filter.min_item_ratings;
    });
    if (kept.size() == before) break;
  }
  if (kept.empty())
    throw Error(ErrorKind::FilterTooStrict, "no ratings remain after filtering");

  IngestedData out;
  std::set<std::string> users, items;
  for (const auto& [key, e] : kept) {
    users.insert(key.first);
    items.insert(key.second);
  }
  out.user_ids.assign(users.begin(), users.end());
  out.item_ids.assign(items.begin(), items.end());
  std::unordered_map<std::string, std::size_t> user_index, item_index;
  for (std::size_t u = 0; u < out.user_ids.size(); ++u) user_index[out.user_ids[u]] = u;
  for (std::size_t i = 0; i < out.item_ids.size(); ++i) item_index[out.item_ids[i]] = i;

  std::vector<Rating> ratings;
  ratings.reserve(kept.size());
  for (const auto& [key, e] : kept)
    ratings.push_back({static_cast<std::uint32_t>(item_index[key.second]),
                       static_cast<std::uint32_t>(user_index[key.first]), e.stars});
  std::sort(ratings.begin(), ratings.end(), [](const Rating& a, const Rating& b) {
    return std::tie(a.user, a.item) < std::tie(b.user, b.item);
  });
  out.data = RatingsDataset(std::move(ratings), categories, out.item_ids.size(), out.user_ids.size());

  const auto I = static_cast<Eigen::Index>(out.item_ids.size());
  const auto p = static_cast<Eigen::Index>(cov_cols.size());
  out.items.covariates.resize(I, p);
  out.items.locations.resize(out.item_ids.size());
  for (Eigen::Index i = 0; i < I; ++i) {
    const ItemRow& r = item_rows.at(out.item_ids[static_cast<std::size_t>(i)]);
    out.items.locations[static_cast<std::size_t>(i)] = r.loc;
    for (Eigen::Index j = 0; j < p; ++j) out.items.covariates(i, j) = r.cov[static_cast<std::size_t>(j)];
  }
  out.covariate_names = cov_names;
  out.covariate_mean = Eigen::VectorXd::Zero(p);
  out.covariate_sd = Eigen::VectorXd::Ones(p);
  if (standardize && p > 0) {
    out.covariate_mean = out.items.covariates.colwise().mean().transpose();
    for (Eigen::Index j = 0; j < p; ++j) {
      const double sd = I > 1 ? std::sqrt((out.items.covariates.col(j).array() -
                                           out.covariate_mean(j)).square().sum() /
                                          static_cast<double>(I - 1))
                              : 0.0;
      if (!(sd > 0.0))
        throw Error(ErrorKind::Configuration,
                    "covariate '" + cov_names[static_cast<std::size_t>(j)] +
                        "' is constant over the retained items");
      out.covariate_sd(j) = sd;
      out.items.covariates.col(j) =
          (out.items.covariates.col(j).array() - out.covariate_mean(j)) / sd;
    }
  }
  out.items.validate();
  return out;
}

std::pair<RatingsDataset, RatingsDataset> split_train_test(const RatingsDataset& data,
                                                           double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorKind::Configuration, "split fraction must lie in (0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t j = order.size(); j > 1; --j) std::swap(order[j - 1], order[rng.below(j)]);
  const auto n_train =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.subset(train), data.subset(test)};
}

// ---------------------------------------------------------------- samples

namespace {

template <typename Row>
std::string table(const std::vector<std::string>& header, std::size_t rows, Row&& row) {
  std::string s;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) s.push_back(',');
    s += header[j];
  }
  s.push_back('\n');
  std::vector<double> values;
  for (std::size_t t = 0; t < rows; ++t) {
    values.clear();
    row(t, values);
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (j) s.push_back(',');
      s += format_double(values[j]);
    }
    s.push_back('\n');
  }
  return s;
}

std::vector<std::string> names(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < n; ++j) out.push_back(prefix + std::to_string(j + 1));
  return out;
}

std::vector<std::vector<double>> parse_table(const std::string& text, std::size_t columns,
                                             const std::string& name) {
  std::vector<std::vector<double>> rows;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos) throw Error(ErrorKind::Parse, name + ": missing header");
  ++pos;
  std::size_t line = 1;
  while (pos < text.size()) {
    ++line;
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::vector<double> row;
    row.reserve(columns);
    const char* p = text.data() + pos;
    const char* e = text.data() + end;
    while (columns > 0) {
      double v = 0.0;
      const auto res = std::from_chars(p, e, v);
      if (res.ec != std::errc())
        throw Error(ErrorKind::Parse, name + ":" + std::to_string(line) + ": bad number");
      row.push_back(v);
      p = res.ptr;
      if (p == e) break;
      if (*p != ',') throw Error(ErrorKind::Parse, name + ":" + std::to_string(line) + ": bad separator");
      ++p;
    }
    if (row.size() != columns)
      throw Error(ErrorKind::Parse, name + ":" + std::to_string(line) + ": expected " +
                                        std::to_string(columns) + " values");
    rows.push_back(std::move(row));
    pos = end + 1;
  }
  return rows;
}

json meta_json(const ChainMetadata& m) {
  return json{{"seed", m.seed},
              {"warmup", m.warmup},
              {"samples", m.samples},
              {"thinning", m.thinning},
              {"categories", m.categories},
              {"items", m.items},
              {"users", m.users},
              {"rubrics", m.rubrics},
              {"factors", m.factors},
              {"covariates", m.covariates},
              {"basis_rank", m.basis_rank},
              {"factors_kept", m.factors_kept},
              {"acceptance_rates", m.acceptance_rates},
              {"laplace_fallbacks", m.laplace_fallbacks},
              {"seconds", m.seconds}};
}

ChainMetadata meta_from(const json& j) {
  ChainMetadata m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.warmup = j.at("warmup").get<int>();
  m.samples = j.at("samples").get<int>();
  m.thinning = j.at("thinning").get<int>();
  m.categories = j.at("categories").get<int>();
  m.items = j.at("items").get<std::size_t>();
  m.users = j.at("users").get<std::size_t>();
  m.rubrics = j.at("rubrics").get<int>();
  m.factors = j.at("factors").get<int>();
  m.covariates = j.at("covariates").get<std::size_t>();
  m.basis_rank = j.at("basis_rank").get<std::size_t>();
  m.factors_kept = j.at("factors_kept").get<bool>();
  m.acceptance_rates = j.at("acceptance_rates").get<std::vector<double>>();
  m.laplace_fallbacks = j.at("laplace_fallbacks").get<std::size_t>();
  m.seconds = j.at("seconds").get<double>();
  return m;
}

}  // namespace

void persist_samples(const PosteriorSamples& samples, const fs::path& dir) {
  fs::create_directories(dir);
  const ChainMetadata& m = samples.meta;
  const std::size_t T = samples.draws.size();
  const auto& D = samples.draws;
  const auto M = static_cast<std::size_t>(m.rubrics);
  const auto K1 = static_cast<std::size_t>(std::max(0, m.categories - 1));
  const auto L = static_cast<std::size_t>(m.factors);
  auto copy = [](const Eigen::MatrixXd& x, std::vector<double>& v) {
    // row-major flattening
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c) v.push_back(x(r, c));
  };

  std::map<std::string, std::string> files;
  files["classes.csv"] = table(names("user", m.users), T, [&](std::size_t t, auto& v) {
    for (int c : D[t].classes) v.push_back(c + 1);
  });
  files["weights.csv"] = table(names("omega", M), T, [&](std::size_t t, auto& v) {
    for (Eigen::Index j = 0; j < D[t].weights.size(); ++j) v.push_back(D[t].weights(j));
  });
  std::vector<std::string> rubric_header;
  for (std::size_t r = 0; r < M; ++r)
    for (std::size_t k = 0; k < K1; ++k)
      rubric_header.push_back("theta" + std::to_string(r + 1) + "_" + std::to_string(k + 1));
  files["rubrics.csv"] = table(rubric_header, T, [&](std::size_t t, auto& v) { copy(D[t].rubrics, v); });
  files["gamma.csv"] = table(names("gamma", m.covariates), T, [&](std::size_t t, auto& v) {
    for (Eigen::Index j = 0; j < D[t].gamma.size(); ++j) v.push_back(D[t].gamma(j));
  });
  files["item_effects.csv"] = table(names("b", m.items), T, [&](std::size_t t, auto& v) {
    for (Eigen::Index j = 0; j < D[t].item_effects.size(); ++j) v.push_back(D[t].item_effects(j));
  });
  files["eta.csv"] = table(names("eta", m.basis_rank), T, [&](std::size_t t, auto& v) {
    for (Eigen::Index j = 0; j < D[t].eta.size(); ++j) v.push_back(D[t].eta(j));
  });
  files["scalars.csv"] = table({"sigma_b", "sigma_beta", "sigma_eta", "loglik"}, T,
                               [&](std::size_t t, auto& v) {
                                 v.insert(v.end(), {D[t].sigma_b, D[t].sigma_beta, D[t].sigma_eta,
                                                    D[t].loglik});
                               });
  if (m.factors_kept) {
    std::vector<std::string> ha, hb;
    for (std::size_t u = 0; u < m.users; ++u)
      for (std::size_t l = 0; l < L; ++l)
        ha.push_back("alpha" + std::to_string(u + 1) + "_" + std::to_string(l + 1));
    for (std::size_t i = 0; i < m.items; ++i)
      for (std::size_t l = 0; l < L; ++l)
        hb.push_back("beta" + std::to_string(i + 1) + "_" + std::to_string(l + 1));
    files["alpha.csv"] = table(ha, T, [&](std::size_t t, auto& v) { copy(D[t].alpha, v); });
    files["beta.csv"] = table(hb, T, [&](std::size_t t, auto& v) { copy(D[t].beta, v); });
  }

  json manifest;
  manifest["format_version"] = kSampleFormatVersion;
  manifest["software_version"] = kVersion;
  manifest["draws"] = T;
  manifest["meta"] = meta_json(m);
  for (const auto& [name, content] : files) {
    write_file_atomic(dir / name, content);
    manifest["files"][name] = sha256_hex(content);
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

PosteriorSamples load_samples(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, (dir / "manifest.json").string() + ": " + e.what());
  }
  const int version = manifest.value("format_version", -1);
  if (version != kSampleFormatVersion)
    throw Error(ErrorKind::VersionMismatch,
                "sample format version " + std::to_string(version) + " but this build reads " +
                    std::to_string(kSampleFormatVersion));
  PosteriorSamples out;
  out.meta = meta_from(manifest.at("meta"));
  const ChainMetadata& m = out.meta;
  const auto T = manifest.at("draws").get<std::size_t>();

  std::map<std::string, std::string> content;
  for (const auto& [name, digest] : manifest.at("files").items()) {
    std::string text = read_file(dir / name);
    if (sha256_hex(text) != digest.get<std::string>())
      throw Error(ErrorKind::DigestMismatch, (dir / name).string() + " does not match its recorded digest");
    content[name] = std::move(text);
  }
  auto load = [&](const std::string& name, std::size_t columns) {
    if (!content.count(name)) throw Error(ErrorKind::Io, "sample file " + name + " missing from manifest");
    auto rows = parse_table(content[name], columns, name);
    if (rows.size() != T)
      throw Error(ErrorKind::Parse, name + ": expected " + std::to_string(T) + " draws");
    return rows;
  };
  const auto M = static_cast<std::size_t>(m.rubrics);
  const auto K1 = static_cast<std::size_t>(std::max(0, m.categories - 1));
  const auto L = static_cast<std::size_t>(m.factors);
  const auto classes = load("classes.csv", m.users);
  const auto weights = load("weights.csv", M);
  const auto rubrics = load("rubrics.csv", M * K1);
  const auto gamma = load("gamma.csv", m.covariates);
  const auto b = load("item_effects.csv", m.items);
  const auto eta = load("eta.csv", m.basis_rank);
  const auto scalars = load("scalars.csv", 4);
  std::vector<std::vector<double>> alpha, beta;
  if (m.factors_kept) {
    alpha = load("alpha.csv", m.users * L);
    beta = load("beta.csv", m.items * L);
  }
  auto vec = [](const std::vector<double>& v) {
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  auto mat = [](const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    return Eigen::MatrixXd(Eigen::Map<const RowMajor>(v.data(), static_cast<Eigen::Index>(rows),
                                                      static_cast<Eigen::Index>(cols)));
  };
  out.draws.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    Draw& d = out.draws[t];
    d.classes.reserve(m.users);
    for (double c : classes[t]) d.classes.push_back(static_cast<int>(c) - 1);
    d.weights = vec(weights[t]);
    d.rubrics = mat(rubrics[t], M, K1);
    d.gamma = vec(gamma[t]);
    d.item_effects = vec(b[t]);
    d.eta = vec(eta[t]);
    d.sigma_b = scalars[t][0];
    d.sigma_beta = scalars[t][1];
    d.sigma_eta = scalars[t][2];
    d.loglik = scalars[t][3];
    if (m.factors_kept) {
      d.alpha = mat(alpha[t], m.users, L);
      d.beta = mat(beta[t], m.items, L);
    } else {
      d.alpha.resize(L == 0 ? static_cast<Eigen::Index>(m.users) : 0, static_cast<Eigen::Index>(L));
      d.beta.resize(L == 0 ? static_cast<Eigen::Index>(m.items) : 0, static_cast<Eigen::Index>(L));
    }
  }
  return out;
}

// ---------------------------------------------------------------- checkpoints

namespace {

json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_json(const Eigen::MatrixXd& x) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < x.rows(); ++r) rows.push_back(vector_json(x.row(r).transpose()));
  return json{{"rows", x.rows()}, {"cols", x.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  Eigen::MatrixXd x(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  for (Eigen::Index r = 0; r < x.rows(); ++r) x.row(r) = vector_from(j.at("data").at(static_cast<std::size_t>(r))).transpose();
  return x;
}

}  // namespace

void save_checkpoint(const ChainCheckpoint& cp, const fs::path& dir) {
  fs::create_directories(dir);
  const ModelState& s = cp.state;
  json j;
  j["format_version"] = kSampleFormatVersion;
  j["iteration"] = cp.iteration;
  j["classes"] = s.classes;
  j["utilities"] = vector_json(s.utilities);
  json rubrics = json::array();
  for (const Rubric& r : s.rubrics) rubrics.push_back(vector_json(r.breaks()));
  j["rubrics"] = rubrics;
  j["weights"] = vector_json(s.weights);
  j["alpha"] = matrix_json(s.alpha);
  j["beta"] = matrix_json(s.beta);
  j["gamma"] = vector_json(s.gamma);
  j["item_effects"] = vector_json(s.item_effects);
  j["eta"] = vector_json(s.eta);
  j["sigma"] = {s.sigma_b, s.sigma_beta, s.sigma_eta};
  j["predictors"] = vector_json(cp.predictors);
  json proposals = json::array();
  for (const LaplaceProposal& p : cp.proposals)
    proposals.push_back({{"mode", vector_json(p.mode)},
                         {"factor", matrix_json(p.precision_factor)},
                         {"age", p.age},
                         {"valid", p.valid}});
  j["proposals"] = proposals;
  j["accepted"] = cp.accepted;
  j["attempted"] = cp.attempted;
  j["fallbacks"] = cp.fallbacks;
  persist_samples(cp.partial, dir / "partial");
  write_file_atomic(dir / "state.json", j.dump() + "\n");
}

ChainCheckpoint load_checkpoint(const fs::path& dir) {
  json j;
  try {
    j = json::parse(read_file(dir / "state.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, (dir / "state.json").string() + ": " + e.what());
  }
  if (j.value("format_version", -1) != kSampleFormatVersion)
    throw Error(ErrorKind::VersionMismatch, "checkpoint format version differs from this build");
  ChainCheckpoint cp;
  cp.iteration = j.at("iteration").get<std::uint64_t>();
  ModelState& s = cp.state;
  s.classes = j.at("classes").get<std::vector<int>>();
  s.utilities = vector_from(j.at("utilities"));
  for (const auto& r : j.at("rubrics")) s.rubrics.emplace_back(vector_from(r));
  s.weights = vector_from(j.at("weights"));
  s.alpha = matrix_from(j.at("alpha"));
  s.beta = matrix_from(j.at("beta"));
  s.gamma = vector_from(j.at("gamma"));
  s.item_effects = vector_from(j.at("item_effects"));
  s.eta = vector_from(j.at("eta"));
  s.sigma_b = j.at("sigma").at(0).get<double>();
  s.sigma_beta = j.at("sigma").at(1).get<double>();
  s.sigma_eta = j.at("sigma").at(2).get<double>();
  cp.predictors = vector_from(j.at("predictors"));
  for (const auto& p : j.at("proposals")) {
    LaplaceProposal q;
    q.mode = vector_from(p.at("mode"));
    q.precision_factor = matrix_from(p.at("factor"));
    q.age = p.at("age").get<int>();
    q.valid = p.at("valid").get<bool>();
    cp.proposals.push_back(std::move(q));
  }
  cp.accepted = j.at("accepted").get<std::vector<std::size_t>>();
  cp.attempted = j.at("attempted").get<std::vector<std::size_t>>();
  cp.fallbacks = j.at("fallbacks").get<std::size_t>();
  cp.partial = load_samples(dir / "partial");
  return cp;
}

// ---------------------------------------------------------------- config

Config parse_config(const std::string& text) {
  Config out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Parse, "config line " + std::to_string(number) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw Error(ErrorKind::Parse, "config line " + std::to_string(number) + ": empty key");
    out[key] = value;
  }
  return out;
}

Config read_config(const fs::path& path) { return parse_config(read_file(path)); }

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      // model and chain
      "rubrics", "factors", "kappa", "sigma_theta", "bandwidth", "rank", "variance_fraction",
      "gamma_prior_precision", "warmup", "samples", "thinning", "seed", "proposal_refresh",
      // ingestion
      "date_from", "date_to", "lon_min", "lon_max", "lat_min", "lat_max", "min_user_ratings",
      "min_item_ratings", "categories",
      // run
      "workers", "test_fraction", "split_seed", "keep_factors", "log_every", "checkpoint_every",
      "cache_check_every", "eigen_method"};
  return keys;
}

namespace {

const std::set<std::string>& run_keys() {
  static const std::set<std::string> keys = {"categories", "workers", "test_fraction", "split_seed",
                                             "keep_factors", "log_every", "checkpoint_every",
                                             "cache_check_every", "eigen_method"};
  return keys;
}

}  // namespace

void apply_config(const Config& config, Hyperparameters& h, IngestFilter& f) {
  auto num = [](const std::string& key, const std::string& v) {
    try {
      return parse_double(v, "config key " + key);
    } catch (const Error&) {
      throw Error(ErrorKind::Configuration, "config key " + key + ": not a number: '" + v + "'");
    }
  };
  auto integer = [](const std::string& key, const std::string& v) {
    try {
      return parse_int(v, "config key " + key);
    } catch (const Error&) {
      throw Error(ErrorKind::Configuration, "config key " + key + ": not an integer: '" + v + "'");
    }
  };
  auto box = [&]() -> BoundingBox& {
    if (!f.box) f.box = BoundingBox{};
    return *f.box;
  };
  for (const auto& [key, v] : config) {
    if (key == "rubrics") h.rubrics = static_cast<int>(integer(key, v));
    else if (key == "factors") h.factors = static_cast<int>(integer(key, v));
    else if (key == "kappa") h.kappa = num(key, v);
    else if (key == "sigma_theta") h.sigma_theta = num(key, v);
    else if (key == "bandwidth") h.bandwidth = num(key, v);
    else if (key == "rank") {
      const long long r = integer(key, v);
      if (r < 0) throw Error(ErrorKind::Configuration, "rank must be nonnegative");
      h.rank_rule = FixedRank{static_cast<std::size_t>(r)};
    } else if (key == "variance_fraction") {
      if (!config.count("rank")) h.rank_rule = VarianceFraction{num(key, v)};
    } else if (key == "gamma_prior_precision") h.gamma_prior_precision = num(key, v);
    else if (key == "warmup") h.warmup = static_cast<int>(integer(key, v));
    else if (key == "samples") h.samples = static_cast<int>(integer(key, v));
    else if (key == "thinning") h.thinning = static_cast<int>(integer(key, v));
    else if (key == "seed") h.seed = static_cast<std::uint64_t>(integer(key, v));
    else if (key == "proposal_refresh") h.proposal_refresh = static_cast<int>(integer(key, v));
    else if (key == "date_from") f.date_from = v;
    else if (key == "date_to") f.date_to = v;
    else if (key == "lon_min") box().lon_min = num(key, v);
    else if (key == "lon_max") box().lon_max = num(key, v);
    else if (key == "lat_min") box().lat_min = num(key, v);
    else if (key == "lat_max") box().lat_max = num(key, v);
    else if (key == "min_user_ratings") f.min_user_ratings = static_cast<int>(integer(key, v));
    else if (key == "min_item_ratings") f.min_item_ratings = static_cast<int>(integer(key, v));
    else if (!run_keys().count(key))
      throw Error(ErrorKind::Configuration, "unknown config key '" + key + "'");
  }
  h.validate();
  f.validate();
}

// ---------------------------------------------------------------- manifests

void write_manifest(const RunManifest& m, const fs::path& path) {
  json j{{"command", m.command},
         {"config", m.config},
         {"seeds", m.seeds},
         {"input_digests", m.input_digests},
         {"version", m.version},
         {"started", m.started},
         {"seconds", m.seconds}};
  write_file_atomic(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config").get<Config>();
  m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
  m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
  m.version = j.at("version").get<std::string>();
  m.started = j.at("started").get<std::string>();
  m.seconds = j.at("seconds").get<double>();
  return m;
}

void verify_inputs(const RunManifest& m) {
  for (const auto& [path, digest] : m.input_digests)
    if (sha256_file(path) != digest)
      throw Error(ErrorKind::DigestMismatch, path + " changed since the recorded run");
}

void write_ids(const std::vector<std::string>& ids, const fs::path& path) {
  std::string s = "index,id\n";
  for (std::size_t j = 0; j < ids.size(); ++j) {
    std::string field = ids[j];
    if (field.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : field) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      field = q + "\"";
    }
    s += std::to_string(j) + "," + field + "\n";
  }
  write_file_atomic(path, s);
}

std::vector<std::string> read_ids(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t c = column(t, "id", path);
  std::vector<std::string> ids;
  for (const auto& row : t.rows) ids.push_back(row[c]);
  return ids;
}

}  // namespace mrubric
