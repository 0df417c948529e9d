#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fedsim/aggregate.hpp"
#include "fedsim/client.hpp"
#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

struct DatasetConfig {
  std::size_t num_classes = 10;
  std::size_t input_dim = 10;
  std::size_t samples_per_class = 500;
  double cluster_spread = 1.0;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

// Agent count lives on ExperimentConfig; see partition_plan().
struct PartitionConfig {
  PartitionMode mode = PartitionMode::kIid;
  std::size_t classes_for_first = 5;
  double server_fraction = 0.0;

  friend bool operator==(const PartitionConfig&, const PartitionConfig&) = default;
};

// Input width and class count come from the dataset section.
struct ModelConfig {
  Architecture architecture = Architecture::kLinear;
  std::size_t hidden_units = 16;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ExperimentConfig {
  std::string experiment_id = "experiment";
  std::size_t rounds = 50;
  std::size_t num_agents = 2;
  std::size_t repetitions = 3;
  std::uint64_t master_seed = 1;
  // Every repetition reuses repetition 0's seeds.
  bool repeat_identical_seeds = false;

  DatasetConfig dataset;
  PartitionConfig partition;
  ModelConfig model;
  ClientConfig client;
  AggregationConfig aggregation;

  // Throws ConfigError naming the first offending field.
  void validate() const;

  ModelSpec model_spec() const;
  PartitionPlan partition_plan() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct RoundRecord {
  std::size_t round = 0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
  double mean_update_l2 = 0.0;
  double masked_fraction = 0.0;
  double conflict_rate = 0.0;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct RepetitionResult {
  std::vector<RoundRecord> rounds;
  ParamVector final_weights;
};

struct RunSummary {
  std::string experiment_id;
  double final_acc_mean = 0.0;
  // Sample standard deviation (ddof = 1); 0 when there is one repetition.
  double final_acc_std = 0.0;
  // Set when final_acc_std is 0 only because repetitions == 1.
  bool std_undefined = false;
  std::vector<double> final_accuracies;
  std::vector<std::vector<RoundRecord>> history;
};

// Observation points inside run_once(); all optional.
struct RunHooks {
  std::function<void(std::size_t round, std::size_t client_id, std::size_t step,
                     const ParamVector& w)>
      on_client_step;
  std::function<void(const ServerState& before,
                     std::span<const ClientUpdate> updates,
                     const ServerState& after)>
      on_server_step;
};

// Seeds used by one repetition. With repeat_identical_seeds every
// repetition maps to index 0.
struct RepetitionSeeds {
  std::uint64_t data;       // hash64(master, {rep}, "data")
  std::uint64_t partition;  // hash64(data, {}, "partition")
  std::uint64_t init;       // hash64(master, {rep}, "init")
  std::uint64_t master;
  std::uint64_t repetition;

  // hash64(master, {rep, round, client_id}, "client")
  std::uint64_t client(std::size_t round, std::size_t client_id) const;
  // hash64(master, {rep, round}, "server")
  std::uint64_t server(std::size_t round) const;
};

RepetitionSeeds seeds_for(const ExperimentConfig& cfg,
                          std::size_t repetition_index);

// Data for one repetition, exactly as run_once() builds it.
Partition make_partition(const ExperimentConfig& cfg,
                         std::size_t repetition_index);

RepetitionResult run_once(const ExperimentConfig& cfg,
                          std::size_t repetition_index,
                          const RunHooks& hooks = {});

// Runs every repetition (on up to `jobs` threads) and summarizes final
// validation accuracy.
RunSummary run(const ExperimentConfig& cfg, std::size_t jobs = 1);

// Mean and ddof=1 standard deviation over per-repetition results.
RunSummary summarize(std::string experiment_id,
                     std::vector<RepetitionResult> results);

// One model trained with the client optimizer on the union of all shards
// and the server holdout. Epochs of "round" r reuse client 0's round-r
// seed, so with K = 1 it sees the same batch order as run_once.
RepetitionResult centralized_once(const ExperimentConfig& cfg,
                                  std::size_t repetition_index);
RunSummary centralized_baseline(const ExperimentConfig& cfg,
                                std::size_t jobs = 1);

// Ordered list of (dotted config path, candidate values).
using Grid = std::vector<std::pair<std::string, std::vector<nlohmann::json>>>;

struct GridCell {
  std::size_t index = 0;  // enumeration order
  nlohmann::json delta;   // {path: value} applied to the base config
  ExperimentConfig config;
  RunSummary summary;
};

// Cartesian product of the grid, paths sorted lexicographically and the
// first path varying slowest. Every cell is validated before any run.
std::vector<std::pair<nlohmann::json, ExperimentConfig>> enumerate_grid(
    const ExperimentConfig& base, Grid grid);

// Runs every cell and ranks by final_acc_mean, descending; ties keep
// enumeration order.
std::vector<GridCell> grid_search(const ExperimentConfig& base, Grid grid,
                                  std::size_t jobs = 1);

}  // namespace fedsim
