#include "fedsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fedsim/config.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/parallel.hpp"
#include "fedsim/random.hpp"

namespace fedsim {
namespace {

std::size_t effective_repetition(const ExperimentConfig& cfg, std::size_t rep) {
  return cfg.repeat_identical_seeds ? 0 : rep;
}

double mean_conflict_rate(const ModelSpec& spec, const ParamVector& w_r,
                          std::span<const ClientUpdate> updates,
                          const Dataset& probe) {
  if (updates.size() < 2) return 0.0;
  std::vector<ParamVector> local;
  local.reserve(updates.size());
  for (const ClientUpdate& u : updates) {
    if (u.local_weights.size() == w_r.size()) {
      local.push_back(u.local_weights);
      continue;
    }
    ParamVector w = w_r;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += u.delta[i];
    local.push_back(std::move(w));
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < local.size(); ++a) {
    for (std::size_t b = a + 1; b < local.size(); ++b) {
      sum += hypothesis_conflict_rate(spec, local[a], local[b], probe);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds", "must be >= 1");
  if (num_agents < 1) throw ConfigError("num_agents", "must be >= 1");
  if (repetitions < 1) throw ConfigError("repetitions", "must be >= 1");

  if (dataset.num_classes < 2) throw ConfigError("dataset.num_classes", "must be >= 2");
  if (dataset.input_dim < 1) throw ConfigError("dataset.input_dim", "must be >= 1");
  if (dataset.samples_per_class < 1) {
    throw ConfigError("dataset.samples_per_class", "must be >= 1");
  }
  if (!(dataset.cluster_spread > 0.0) || !std::isfinite(dataset.cluster_spread)) {
    throw ConfigError("dataset.cluster_spread", "must be finite and > 0");
  }

  if (partition.mode == PartitionMode::kLabelShard) {
    if (num_agents != 2) {
      throw ConfigError("partition.mode", "label_shard requires num_agents = 2");
    }
    if (partition.classes_for_first < 1 ||
        partition.classes_for_first >= dataset.num_classes) {
      throw ConfigError("partition.classes_for_first",
                        "must lie in [1, dataset.num_classes)");
    }
  }
  if (!(partition.server_fraction >= 0.0 && partition.server_fraction <= 0.5)) {
    throw ConfigError("partition.server_fraction", "must lie in [0, 0.5]");
  }

  if (model.architecture == Architecture::kOneHidden && model.hidden_units < 1) {
    throw ConfigError("model.hidden_units", "must be >= 1");
  }

  client.validate("client");
  aggregation.validate(num_agents);
  if (aggregation.finetune && partition.server_fraction <= 0.0) {
    throw ConfigError("aggregation.finetune",
                      "requires partition.server_fraction > 0 (empty server holdout)");
  }
}

ModelSpec ExperimentConfig::model_spec() const {
  if (model.architecture == Architecture::kLinear) {
    return ModelSpec::linear(dataset.input_dim, dataset.num_classes);
  }
  return ModelSpec::one_hidden(dataset.input_dim, model.hidden_units,
                               dataset.num_classes);
}

PartitionPlan ExperimentConfig::partition_plan() const {
  PartitionPlan plan;
  plan.mode = partition.mode;
  plan.num_agents = num_agents;
  plan.classes_for_first = partition.classes_for_first;
  plan.server_fraction = partition.server_fraction;
  return plan;
}

std::uint64_t RepetitionSeeds::client(std::size_t round,
                                      std::size_t client_id) const {
  return hash64(master, {repetition, round, client_id}, "client");
}

std::uint64_t RepetitionSeeds::server(std::size_t round) const {
  return hash64(master, {repetition, round}, "server");
}

RepetitionSeeds seeds_for(const ExperimentConfig& cfg,
                          std::size_t repetition_index) {
  const std::uint64_t rep = effective_repetition(cfg, repetition_index);
  RepetitionSeeds s{};
  s.master = cfg.master_seed;
  s.repetition = rep;
  s.data = hash64(cfg.master_seed, {rep}, "data");
  s.partition = hash64(s.data, {}, "partition");
  s.init = hash64(cfg.master_seed, {rep}, "init");
  return s;
}

Partition make_partition(const ExperimentConfig& cfg,
                         std::size_t repetition_index) {
  const RepetitionSeeds seeds = seeds_for(cfg, repetition_index);
  const Dataset ds = make_blobs(cfg.dataset.num_classes, cfg.dataset.input_dim,
                                cfg.dataset.samples_per_class,
                                cfg.dataset.cluster_spread, seeds.data);
  return partition(ds, cfg.partition_plan(), seeds.partition);
}

RepetitionResult run_once(const ExperimentConfig& cfg,
                          std::size_t repetition_index,
                          const RunHooks& hooks) {
  cfg.validate();
  const RepetitionSeeds seeds = seeds_for(cfg, repetition_index);
  const ModelSpec spec = cfg.model_spec();
  const Partition data = make_partition(cfg, repetition_index);

  ServerState state = ServerState::initial(init_params(spec, seeds.init));
  RepetitionResult result;
  result.rounds.reserve(cfg.rounds);

  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    std::vector<ClientUpdate> updates;
    updates.reserve(cfg.num_agents);
    for (std::size_t k = 0; k < cfg.num_agents; ++k) {
      TrainContext ctx{r, k, {}};
      if (hooks.on_client_step) {
        ctx.on_step = [&, r, k](std::size_t step, const ParamVector& w) {
          hooks.on_client_step(r, k, step, w);
        };
      }
      updates.push_back(local_train(spec, state.weights, data.shards[k],
                                    cfg.client, seeds.client(r, k), ctx));
    }

    RoundRecord rec;
    rec.round = r;
    double norm_sum = 0.0;
    for (const ClientUpdate& u : updates) norm_sum += u.delta.l2_norm();
    rec.mean_update_l2 = norm_sum / static_cast<double>(updates.size());
    rec.conflict_rate = mean_conflict_rate(spec, state.weights, updates, data.validation);

    StepReport report;
    ServerState next = server_step(state, updates, cfg.aggregation, &report);
    rec.masked_fraction = report.masked_fraction;
    if (hooks.on_server_step) hooks.on_server_step(state, updates, next);

    if (cfg.aggregation.finetune) {
      next.weights = finetune(spec, next.weights, data.server_holdout,
                              *cfg.aggregation.finetune, seeds.server(r), r);
    }
    state = std::move(next);

    const Evaluation eval = evaluate(spec, state.weights, data.validation);
    rec.val_accuracy = eval.accuracy;
    rec.val_loss = eval.mean_loss;
    result.rounds.push_back(rec);
  }
  result.final_weights = std::move(state.weights);
  return result;
}

RunSummary summarize(std::string experiment_id,
                     std::vector<RepetitionResult> results) {
  RunSummary s;
  s.experiment_id = std::move(experiment_id);
  // Welford: identical values give exactly zero spread.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (RepetitionResult& r : results) {
    const double acc = r.rounds.empty() ? 0.0 : r.rounds.back().val_accuracy;
    s.final_accuracies.push_back(acc);
    ++n;
    const double d = acc - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (acc - mean);
    s.history.push_back(std::move(r.rounds));
  }
  s.final_acc_mean = mean;
  if (n >= 2) {
    s.final_acc_std = std::sqrt(m2 / static_cast<double>(n - 1));
  } else {
    s.final_acc_std = 0.0;
    s.std_undefined = true;
  }
  return s;
}

RunSummary run(const ExperimentConfig& cfg, std::size_t jobs) {
  cfg.validate();
  std::vector<RepetitionResult> results(cfg.repetitions);
  parallel_for(cfg.repetitions, jobs,
               [&](std::size_t i) { results[i] = run_once(cfg, i); });
  return summarize(cfg.experiment_id, std::move(results));
}

RepetitionResult centralized_once(const ExperimentConfig& cfg,
                                  std::size_t repetition_index) {
  cfg.validate();
  const RepetitionSeeds seeds = seeds_for(cfg, repetition_index);
  const ModelSpec spec = cfg.model_spec();
  const Partition data = make_partition(cfg, repetition_index);

  std::vector<Dataset> parts = data.shards;
  parts.push_back(data.server_holdout);
  const Dataset pooled = concat(parts);

  ParamVector w = init_params(spec, seeds.init);
  RepetitionResult result;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const ParamVector before = w;
    sgd_train(spec, w, pooled, cfg.client, seeds.client(r, 0), {r, 0, {}});
    RoundRecord rec;
    rec.round = r;
    double d2 = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w[i] - before[i];
      d2 += d * d;
    }
    rec.mean_update_l2 = std::sqrt(d2);
    const Evaluation eval = evaluate(spec, w, data.validation);
    rec.val_accuracy = eval.accuracy;
    rec.val_loss = eval.mean_loss;
    result.rounds.push_back(rec);
  }
  result.final_weights = std::move(w);
  return result;
}

RunSummary centralized_baseline(const ExperimentConfig& cfg, std::size_t jobs) {
  cfg.validate();
  std::vector<RepetitionResult> results(cfg.repetitions);
  parallel_for(cfg.repetitions, jobs,
               [&](std::size_t i) { results[i] = centralized_once(cfg, i); });
  return summarize(cfg.experiment_id + "/centralized", std::move(results));
}

std::vector<std::pair<nlohmann::json, ExperimentConfig>> enumerate_grid(
    const ExperimentConfig& base, Grid grid) {
  std::stable_sort(grid.begin(), grid.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [path, values] : grid) {
    if (values.empty()) throw ConfigError(path, "grid axis has no values");
  }

  std::vector<std::pair<nlohmann::json, ExperimentConfig>> cells;
  std::vector<std::size_t> digit(grid.size(), 0);
  while (true) {
    nlohmann::json delta = nlohmann::json::object();
    for (std::size_t a = 0; a < grid.size(); ++a) {
      delta[grid[a].first] = grid[a].second[digit[a]];
    }
    ExperimentConfig cfg = apply_overrides(base, delta);
    if (!delta.contains("experiment_id")) {
      char suffix[32];
      std::snprintf(suffix, sizeof suffix, "/cell_%03zu", cells.size());
      cfg.experiment_id = base.experiment_id + suffix;
    }
    cells.emplace_back(std::move(delta), std::move(cfg));

    // Odometer increment, last axis fastest.
    std::size_t a = grid.size();
    while (a > 0) {
      --a;
      if (++digit[a] < grid[a].second.size()) break;
      digit[a] = 0;
      if (a == 0) return cells;
    }
    if (grid.empty()) return cells;
  }
}

std::vector<GridCell> grid_search(const ExperimentConfig& base, Grid grid,
                                  std::size_t jobs) {
  auto cells = enumerate_grid(base, std::move(grid));
  std::vector<GridCell> out;
  out.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    GridCell cell;
    cell.index = i;
    cell.delta = std::move(cells[i].first);
    cell.config = std::move(cells[i].second);
    cell.summary = run(cell.config, jobs);
    out.push_back(std::move(cell));
  }
  std::stable_sort(out.begin(), out.end(), [](const GridCell& a, const GridCell& b) {
    return a.summary.final_acc_mean > b.summary.final_acc_mean;
  });
  return out;
}

}  // namespace fedsim
