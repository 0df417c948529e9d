#pragma once

#include <filesystem>

#include "json.hpp"

#include "fedsim/experiment.hpp"

namespace fedsim {

// JSON form of an experiment. Every field is emitted; optional fields that
// are unset appear as null. Example:
//
//   {
//     "experiment_id": "niid_baseline",
//     "rounds": 50, "num_agents": 2, "repetitions": 3, "master_seed": 1,
//     "repeat_identical_seeds": false,
//     "dataset": {"num_classes": 10, "input_dim": 10,
//                 "samples_per_class": 500, "cluster_spread": 1.0},
//     "partition": {"mode": "label_shard", "classes_for_first": 5,
//                   "server_fraction": 0.0},
//     "model": {"architecture": "linear", "hidden_units": 16},
//     "client": {"epochs": 1, "batch_size": 32, "learning_rate": 0.1,
//                "weight_decay": 0.0005, "l2_ball_radius": null,
//                "grad_noise_std": 0.0},
//     "aggregation": {"server_lr": 1.0, "momentum_beta": 0.0,
//                     "sign_threshold": null, "sign_mode": "absolute_sum",
//                     "finetune": null}
//   }
nlohmann::json to_json(const ExperimentConfig& cfg);

// Missing keys take their defaults; unknown keys and wrongly typed values
// throw ConfigError naming the dotted path. The result is validated.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::filesystem::path& path);

// Grid file: a JSON object mapping dotted config paths to arrays of
// values, e.g. {"aggregation.momentum_beta": [0.0, 0.5, 0.9]}.
Grid grid_from_json(const nlohmann::json& j);
Grid load_grid(const std::filesystem::path& path);

// Applies {dotted.path: value, ...} to a config. Paths must name existing
// fields. Throws ConfigError otherwise.
ExperimentConfig apply_overrides(const ExperimentConfig& base,
                                 const nlohmann::json& delta);

}  // namespace fedsim
