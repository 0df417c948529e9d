#include "fedsim/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

std::vector<std::size_t> client_order(std::span<const ClientUpdate> updates) {
  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return updates[a].client_id < updates[b].client_id;
  });
  return order;
}

void check_updates(std::span<const ClientUpdate> updates, const char* who) {
  if (updates.empty()) throw InputError(std::string(who) + ": no client updates");
  const std::size_t dim = updates.front().delta.size();
  for (const ClientUpdate& u : updates) {
    if (u.delta.size() != dim) {
      throw InputError(std::string(who) + ": client " +
                       std::to_string(u.client_id) + " sent " +
                       std::to_string(u.delta.size()) + " entries, expected " +
                       std::to_string(dim));
    }
  }
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

void AggregationConfig::validate(std::size_t num_agents) const {
  if (!(server_lr > 0.0) || !std::isfinite(server_lr)) {
    throw ConfigError("aggregation.server_lr", "must be finite and > 0");
  }
  if (!(momentum_beta >= 0.0 && momentum_beta < 1.0)) {
    throw ConfigError("aggregation.momentum_beta", "must lie in [0, 1)");
  }
  if (sign_threshold) {
    if (*sign_threshold < 0) {
      throw ConfigError("aggregation.sign_threshold", "must be >= 0");
    }
    if (static_cast<std::size_t>(*sign_threshold) > num_agents) {
      throw ConfigError("aggregation.sign_threshold",
                        "cannot exceed the number of agents (" +
                            std::to_string(num_agents) + ")");
    }
  }
  if (finetune) {
    ClientConfig as_client{finetune->epochs, finetune->batch_size,
                           finetune->learning_rate, finetune->weight_decay,
                           std::nullopt, 0.0};
    as_client.validate("aggregation.finetune");
  }
}

ServerState ServerState::initial(ParamVector w0) {
  ServerState s;
  s.velocity = ParamVector(w0.size());
  s.weights = std::move(w0);
  return s;
}

namespace {

// Accumulates sum_k (n_k / N) * row_k(i) in client_id order.
template <typename RowFn>
ParamVector weighted_sum(std::span<const ClientUpdate> updates, std::size_t dim,
                         RowFn&& row) {
  double total = 0.0;
  for (const ClientUpdate& u : updates) {
    if (u.sample_count < 1) {
      throw InputError("weighted_mean: client " + std::to_string(u.client_id) +
                       " reported zero samples");
    }
    total += static_cast<double>(u.sample_count);
  }
  ParamVector out(dim);
  bool first = true;
  for (std::size_t k : client_order(updates)) {
    const double p = static_cast<double>(updates[k].sample_count) / total;
    for (std::size_t i = 0; i < dim; ++i) {
      const double term = p * row(updates[k], i);
      out[i] = first ? term : out[i] + term;
    }
    first = false;
  }
  return out;
}

}  // namespace

ParamVector weighted_mean(std::span<const ClientUpdate> updates) {
  check_updates(updates, "weighted_mean");
  if (updates.size() == 1) return updates.front().delta;
  double total = 0.0;
  for (const ClientUpdate& u : updates) {
    if (u.sample_count < 1) {
      throw InputError("weighted_mean: client " + std::to_string(u.client_id) +
                       " reported zero samples");
    }
    total += static_cast<double>(u.sample_count);
  }
  // Neumaier summation of n_k * delta_k: agents' deltas often nearly cancel
  // under label skew, and the plain running sum loses relative accuracy
  // exactly there.
  const std::size_t dim = updates.front().delta.size();
  const std::vector<std::size_t> order = client_order(updates);
  ParamVector out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    double sum = 0.0, comp = 0.0;
    for (std::size_t k : order) {
      const double term = static_cast<double>(updates[k].sample_count) * updates[k].delta[i];
      const double t = sum + term;
      comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
      sum = t;
    }
    out[i] = (sum + comp) / total;
  }
  return out;
}

ParamVector weighted_model_mean(std::span<const ClientUpdate> updates,
                                const ParamVector& base) {
  check_updates(updates, "weighted_model_mean");
  for (const ClientUpdate& u : updates) {
    if (u.delta.size() != base.size() ||
        (u.local_weights.size() != 0 && u.local_weights.size() != base.size())) {
      throw InputError("weighted_model_mean: update length does not match the model");
    }
  }
  return weighted_sum(updates, base.size(), [&](const ClientUpdate& u, std::size_t i) {
    return u.local_weights.size() != 0 ? u.local_weights[i] : base[i] + u.delta[i];
  });
}

std::vector<double> sign_lr_mask(std::span<const ClientUpdate> updates,
                                 std::int64_t threshold, SignMode mode) {
  check_updates(updates, "sign_lr_mask");
  const std::size_t dim = updates.front().delta.size();
  std::vector<std::int64_t> votes(dim, 0);
  for (const ClientUpdate& u : updates) {
    for (std::size_t i = 0; i < dim; ++i) votes[i] += sign_of(u.delta[i]);
  }
  std::vector<double> mask(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const std::int64_t s = mode == SignMode::kAbsoluteSum ? std::abs(votes[i]) : votes[i];
    mask[i] = s >= threshold ? 1.0 : 0.0;
  }
  return mask;
}

ServerState server_step(const ServerState& state,
                        std::span<const ClientUpdate> updates,
                        const AggregationConfig& cfg, StepReport* report) {
  const ParamVector aggregate = weighted_mean(updates);
  if (aggregate.size() != state.weights.size() ||
      state.velocity.size() != state.weights.size()) {
    throw InputError("server_step: update length does not match the model");
  }
  std::vector<double> mask;
  if (cfg.sign_threshold) {
    mask = sign_lr_mask(updates, *cfg.sign_threshold, cfg.sign_mode);
  }

  ServerState next = state;
  std::size_t masked = 0;
  auto is_masked = [&](std::size_t i) { return !mask.empty() && mask[i] == 0.0; };
  if (cfg.momentum_beta == 0.0) {
    const ParamVector model_mean = weighted_model_mean(updates, state.weights);
    for (std::size_t i = 0; i < aggregate.size(); ++i) {
      if (is_masked(i)) {
        next.velocity[i] = 0.0;
        ++masked;
        continue;
      }
      next.velocity[i] = aggregate[i];
      next.weights[i] = std::lerp(state.weights[i], model_mean[i], cfg.server_lr);
    }
  } else {
    for (std::size_t i = 0; i < aggregate.size(); ++i) {
      if (is_masked(i)) {
        next.velocity[i] = 0.0;
        ++masked;
        continue;
      }
      next.velocity[i] = cfg.momentum_beta * state.velocity[i] + aggregate[i];
      next.weights[i] = state.weights[i] + cfg.server_lr * next.velocity[i];
    }
  }
  if (!next.weights.all_finite()) {
    throw DivergenceError(state.round, 0, "server aggregation produced non-finite weights");
  }
  next.round = state.round + 1;
  if (report) {
    report->masked_fraction =
        aggregate.size() == 0
            ? 0.0
            : static_cast<double>(masked) / static_cast<double>(aggregate.size());
  }
  return next;
}

ParamVector finetune(const ModelSpec& spec, const ParamVector& w,
                     const Dataset& holdout, const FinetuneConfig& cfg,
                     std::uint64_t round_seed, std::size_t round) {
  if (holdout.empty()) throw InputError("finetune: empty server holdout");
  const ClientConfig as_client{cfg.epochs, cfg.batch_size, cfg.learning_rate,
                               cfg.weight_decay, std::nullopt, 0.0};
  ParamVector out = w;
  sgd_train(spec, out, holdout, as_client, round_seed, {round, 0, {}});
  return out;
}

}  // namespace fedsim
