#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "anchor/data.hpp"
#include "anchor/learner.hpp"
#include "anchor/metrics.hpp"

namespace anchor {

using Json = nlohmann::ordered_json;

/// Invalid or unreadable experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  enum class Kind { idx, synthetic };
  Kind kind = Kind::idx;
  std::filesystem::path dir;  // idx
  // synthetic
  std::size_t n_classes = 10;
  std::size_t dim = 64;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  Protocol protocol = Protocol::permute;
  std::size_t n_tasks = 23;
  std::size_t samples_per_task = 1000;
  std::size_t classes_per_task = 2;  // split only
  std::vector<std::size_t> hidden{256, 256};
  std::string learner = "er";
  HyperParams hyper;  // also carries cv_tasks and exclude_current_task_from_replay
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path output_dir = "results";
  bool forgetting_max_from_row_j = false;
  bool dump_anchors = false;

  /// Throws ConfigError.
  void validate() const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig parse_config(const Json& doc);
Json to_json(const ExperimentConfig& cfg);

/// Sets a dotted key, e.g. "hyper.lambda=0.3". The value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

/// Reads a config file and applies overrides in order. A relative dataset
/// or output directory is resolved against the config file's
/// directory.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

Dataset load_dataset(const DatasetSpec& spec);
StreamOptions stream_options(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunResult {
  Json config;
  std::uint64_t seed = 0;
  AccuracyMatrix accuracy;
  double average_accuracy = 0.0;
  double max_forgetting = 0.0;
  double wall_time_seconds = 0.0;
  std::optional<std::string> anchors_path;
  std::vector<std::size_t> examples_visited;  // per evaluated task
};

/// Trains through the non-CV tasks in order, one pass each, recording an
/// evaluation row after every task. Writes the anchor dump when requested.
RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed);
RunResult run_single(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed);

/// Hyperparameter name -> candidate values, in listed order.
using Grid = std::vector<std::pair<std::string, std::vector<double>>>;

Grid parse_grid(const Json& doc);

struct GridPoint {
  HyperParams hyper;
  double score = 0.0;  // mean accuracy over CV tasks after CV training
};

struct GridResult {
  HyperParams best;
  double best_score = 0.0;
  std::vector<GridPoint> points;  // Cartesian product, first key varying slowest
};

/// Sets one named field ("lr", "lambda", "gamma", "beta", "mem_per_class",
/// "anchor_steps", "batch_size", "cv_epochs").
void set_hyper(HyperParams& hyper, const std::string& name, double value);

/// Trains a fresh learner on the CV tasks only (cv_epochs passes each) for
/// every grid point and scores the mean CV accuracy. Ties keep the earlier
/// point. Uses the first configured seed.
GridResult grid_search(const ExperimentConfig& cfg, const Dataset& data, const Grid& grid);

struct Summary {
  std::string method;
  std::size_t mem_per_class = 0;
  std::size_t seed_count = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // sample std, 0 for one seed
  double forgetting_mean = 0.0;
  double forgetting_std = 0.0;
  std::vector<double> evolution_mean;
  std::vector<double> evolution_std;
};

/// Throws std::invalid_argument for no results or configs that differ in
/// anything but the seed list.
Summary aggregate(const std::vector<RunResult>& results);

std::string result_filename(const ExperimentConfig& cfg, std::uint64_t seed);

/// Doubles in the matrix and statistics are written with 17 significant
/// digits. Throws std::runtime_error naming the path on I/O failure.
std::filesystem::path write_result(const RunResult& r, const std::filesystem::path& path);
RunResult read_result(const std::filesystem::path& path);

/// summary.csv, evolution_<method>_m<mem>.csv per summary and memory_sweep.csv.
std::vector<std::filesystem::path> write_summaries(const std::vector<Summary>& summaries,
                                                   const std::filesystem::path& dir);

/// Reads every run JSON under `dir`, groups by (method, mem_per_class),
/// aggregates and writes the CSVs.
std::vector<Summary> report_directory(const std::filesystem::path& dir);

}  // namespace anchor
