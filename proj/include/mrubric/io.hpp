#pragma once

// Ingestion, splitting, configuration and persistence.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mrubric/sampler.hpp"
#include "mrubric/types.hpp"

namespace mrubric {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kSampleFormatVersion = 1;

/// Write to a temporary sibling, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct IngestFilter {
  std::optional<std::string> date_from;  // inclusive, YYYY-MM-DD
  std::optional<std::string> date_to;
  std::optional<BoundingBox> box;
  int min_user_ratings = 1;
  int min_item_ratings = 1;
  void validate() const;
};

struct IngestedData {
  RatingsDataset data;
  ItemTable items;
  std::vector<std::string> user_ids;  // dense index -> original id
  std::vector<std::string> item_ids;
  std::vector<std::string> covariate_names;
  Eigen::VectorXd covariate_mean;
  Eigen::VectorXd covariate_sd;
};

/// Ratings CSV columns user_id,item_id,stars,date; items CSV columns
/// item_id,longitude,latitude followed by covariates. Filters are applied
/// until stable; duplicate (user, item) pairs keep the latest date (higher
/// stars on equal dates). Indices follow the sorted original ids.
IngestedData ingest(const std::filesystem::path& ratings_path,
                    const std::filesystem::path& items_path, const IngestFilter& filter,
                    int categories = 5, bool standardize = true);

/// Random disjoint split of the observations; round(fraction * n) go to the
/// training set. Both halves keep the full item and user index ranges.
std::pair<RatingsDataset, RatingsDataset> split_train_test(const RatingsDataset& data,
                                                           double fraction, std::uint64_t seed);

void persist_samples(const PosteriorSamples& samples, const std::filesystem::path& dir);
PosteriorSamples load_samples(const std::filesystem::path& dir);

void save_checkpoint(const ChainCheckpoint& checkpoint, const std::filesystem::path& path);
ChainCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Plain key = value lines; '#' starts a comment.
using Config = std::map<std::string, std::string>;
Config parse_config(const std::string& text);
Config read_config(const std::filesystem::path& path);
/// Keys understood by apply_config, in a stable order.
const std::vector<std::string>& config_keys();
/// Throws Configuration on unknown keys or malformed values.
void apply_config(const Config& config, Hyperparameters& hyper, IngestFilter& filter);

struct RunManifest {
  std::string command;
  Config config;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::string version = kVersion;
  std::string started;
  double seconds = 0.0;
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);
/// Throws DigestMismatch when an input file changed since the run.
void verify_inputs(const RunManifest& manifest);

void write_ids(const std::vector<std::string>& ids, const std::filesystem::path& path);
std::vector<std::string> read_ids(const std::filesystem::path& path);

/// Current UTC time, ISO-8601.
std::string utc_timestamp();

}  // namespace mrubric
