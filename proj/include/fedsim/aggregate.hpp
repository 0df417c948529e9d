#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedsim/client.hpp"
#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

// How the per-dimension sign vote s_i = sum_k sign(delta_k[i]) is compared
// against the threshold.
enum class SignMode {
  kAbsoluteSum,  // keep dimension i iff |s_i| >= theta
  kLiteralSum,   // keep dimension i iff s_i >= theta
};

struct FinetuneConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 256;
  double learning_rate = 0.1;
  double weight_decay = 5e-4;

  friend bool operator==(const FinetuneConfig&, const FinetuneConfig&) = default;
};

struct AggregationConfig {
  double server_lr = 1.0;
  double momentum_beta = 0.0;
  std::optional<std::int64_t> sign_threshold;
  SignMode sign_mode = SignMode::kAbsoluteSum;
  std::optional<FinetuneConfig> finetune;

  void validate(std::size_t num_agents) const;

  friend bool operator==(const AggregationConfig&,
                         const AggregationConfig&) = default;
};

struct ServerState {
  ParamVector weights;
  ParamVector velocity;
  std::size_t round = 0;

  // Round 0 with zero velocity.
  static ServerState initial(ParamVector w0);
};

// sum_k n_k * delta_k / sum_k n_k. Each coordinate's numerator is a
// compensated sum taken in ascending client_id order; a single update is
// returned as is.
ParamVector weighted_mean(std::span<const ClientUpdate> updates);

// Same weighting applied to the local models. Updates without
// local_weights contribute base + delta.
ParamVector weighted_model_mean(std::span<const ClientUpdate> updates,
                                const ParamVector& base);

// 1.0 where the sign vote passes the threshold, 0.0 elsewhere.
// sign(0) = 0, so zero entries never count toward the vote.
std::vector<double> sign_lr_mask(std::span<const ClientUpdate> updates,
                                 std::int64_t threshold, SignMode mode);

struct StepReport {
  double masked_fraction = 0.0;
};

// One server round. With a = weighted_mean(updates) and m the sign mask
// (all ones when theta is unset):
//
//   beta = 0:   v = m * a
//               w[i] = m[i] ? lerp(w[i], wbar[i], eta) : w[i]
//   beta > 0:   v[i] = m[i] ? beta * v[i] + a[i] : 0
//               w[i] = m[i] ? w[i] + eta * v[i]  : w[i]
//
// where wbar = sum_k (n_k / N) * local_weights_k is the averaged local
// model. Both branches equal w + eta * (beta * v + m * a) in exact
// arithmetic; the lerp form is exact at eta = 1, so a single agent
// reproduces its own local model bit for bit.
//
// Masked coordinates are left untouched and their velocity is cleared, so
// a masked dimension never moves even when momentum is on.
// Throws DivergenceError if the new weights are not finite.
ServerState server_step(const ServerState& state,
                        std::span<const ClientUpdate> updates,
                        const AggregationConfig& cfg,
                        StepReport* report = nullptr);

// Trains `w` on the server holdout with the client optimizer (no
// projection, no noise) and returns the result.
ParamVector finetune(const ModelSpec& spec, const ParamVector& w,
                     const Dataset& holdout, const FinetuneConfig& cfg,
                     std::uint64_t round_seed, std::size_t round = 0);

}  // namespace fedsim
