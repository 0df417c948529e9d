#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

struct ClientConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 256;
  double learning_rate = 0.1;
  double weight_decay = 5e-4;
  std::optional<double> l2_ball_radius;
  double grad_noise_std = 0.0;

  // Throws ConfigError naming the field (prefixed with `section`).
  void validate(const std::string& section = "client") const;

  friend bool operator==(const ClientConfig&, const ClientConfig&) = default;
};

struct ClientUpdate {
  ParamVector delta;
  std::size_t sample_count = 0;
  std::size_t client_id = 0;
  // The agent's final local model (w_r + delta before rounding). May be
  // left empty, in which case the server rebuilds it as w_r + delta.
  ParamVector local_weights;
};

// Called after every optimizer step (after projection) with the global
// step index within the call and the current local parameters.
using StepObserver = std::function<void(std::size_t step, const ParamVector&)>;

struct TrainContext {
  std::size_t round = 0;
  std::size_t client_id = 0;
  StepObserver on_step;
};

// Minibatch SGD on `data` starting from `w`, modified in place. Each step:
//
//   g = grad + weight_decay * w + noise,   noise ~ N(0, grad_noise_std^2 I)
//   w = w - learning_rate * g
//   w = project_l2(w, M)                   if l2_ball_radius is set
//
// Epoch e draws its batch order from hash64(seed, {e}, "epoch"); noise is
// drawn from a stream seeded by hash64(seed, {}, "noise").
// Throws DivergenceError on a non-finite parameter.
void sgd_train(const ModelSpec& spec, ParamVector& w, const Dataset& data,
               const ClientConfig& cfg, std::uint64_t seed,
               const TrainContext& ctx = {});

// One agent's round: trains a private copy of w_r and reports
// delta = w_final - w_r with n_k = |shard|.
ClientUpdate local_train(const ModelSpec& spec, const ParamVector& w_r,
                         const Dataset& shard, const ClientConfig& cfg,
                         std::uint64_t round_seed,
                         const TrainContext& ctx = {});

// Rescales w onto the L2 ball of radius M when it lies outside; returns
// w unchanged (bitwise) otherwise. The scale factor is rounded down until
// the computed norm is <= M, so projecting twice changes nothing.
ParamVector project_l2(const ParamVector& w, double radius);
void project_l2_inplace(ParamVector& w, double radius);

}  // namespace fedsim
