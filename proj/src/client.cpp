#include "fedsim/client.hpp"

#include <cmath>
#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/random.hpp"

namespace fedsim {

void ClientConfig::validate(const std::string& section) const {
  if (epochs < 1) throw ConfigError(section + ".epochs", "must be >= 1");
  if (batch_size < 1) throw ConfigError(section + ".batch_size", "must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError(section + ".learning_rate", "must be finite and >= 0");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError(section + ".weight_decay", "must be finite and >= 0");
  }
  if (l2_ball_radius && !(*l2_ball_radius > 0.0 && std::isfinite(*l2_ball_radius))) {
    throw ConfigError(section + ".l2_ball_radius", "must be finite and > 0");
  }
  if (!(grad_noise_std >= 0.0) || !std::isfinite(grad_noise_std)) {
    throw ConfigError(section + ".grad_noise_std", "must be finite and >= 0");
  }
}

void project_l2_inplace(ParamVector& w, double radius) {
  if (!(radius > 0.0)) throw InputError("project_l2: radius must be > 0");
  const double norm = w.l2_norm();
  if (norm <= radius) return;
  const ParamVector original = w;
  double scale = radius / norm;
  while (true) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = original[i] * scale;
    if (w.l2_norm() <= radius) return;
    scale = std::nextafter(scale, 0.0);
  }
}

ParamVector project_l2(const ParamVector& w, double radius) {
  ParamVector out = w;
  project_l2_inplace(out, radius);
  return out;
}

void sgd_train(const ModelSpec& spec, ParamVector& w, const Dataset& data,
               const ClientConfig& cfg, std::uint64_t seed,
               const TrainContext& ctx) {
  if (data.empty()) throw InputError("sgd_train: empty dataset");
  if (!w.all_finite()) {
    throw DivergenceError(ctx.round, 0, "initial parameters are not finite");
  }
  const bool noisy = cfg.grad_noise_std > 0.0;
  Rng noise(hash64(seed, {}, "noise"));

  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (const Batch& batch : batches(data, cfg.batch_size, hash64(seed, {e}, "epoch"))) {
      const LossGrad lg = loss_and_grad(spec, w, batch);
      for (std::size_t i = 0; i < w.size(); ++i) {
        double g = lg.grad[i] + cfg.weight_decay * w[i];
        if (noisy) g += cfg.grad_noise_std * noise.normal();
        w[i] -= cfg.learning_rate * g;
      }
      if (cfg.l2_ball_radius) project_l2_inplace(w, *cfg.l2_ball_radius);
      if (!w.all_finite()) {
        throw DivergenceError(ctx.round, step,
                              "client " + std::to_string(ctx.client_id) +
                                  " produced non-finite parameters");
      }
      if (ctx.on_step) ctx.on_step(step, w);
      ++step;
    }
  }
}

ClientUpdate local_train(const ModelSpec& spec, const ParamVector& w_r,
                         const Dataset& shard, const ClientConfig& cfg,
                         std::uint64_t round_seed, const TrainContext& ctx) {
  ParamVector w = w_r;
  sgd_train(spec, w, shard, cfg, round_seed, ctx);
  ParamVector delta(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) delta[i] = w[i] - w_r[i];
  return {std::move(delta), shard.size(), ctx.client_id, std::move(w)};
}

}  // namespace fedsim
