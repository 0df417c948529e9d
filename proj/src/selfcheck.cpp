#include "fedsim/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "fedsim/aggregate.hpp"
#include "fedsim/client.hpp"
#include "fedsim/data.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/model.hpp"
#include "fedsim/random.hpp"

namespace fedsim {
namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

ModelSpec random_spec(Rng& rng) {
  const std::size_t d = 1 + rng.below(5);
  const std::size_t c = 2 + rng.below(4);
  if (rng.below(2) == 0) return ModelSpec::linear(d, c);
  return ModelSpec::one_hidden(d, 1 + rng.below(6), c);
}

Batch random_batch(const ModelSpec& spec, std::size_t rows, Rng& rng) {
  Batch b;
  b.inputs = Matrix(rows, spec.input_dim);
  for (std::size_t r = 0; r < rows; ++r) {
    for (double& v : b.inputs.row(r)) v = rng.normal();
    b.labels.push_back(rng.below(spec.num_classes));
  }
  return b;
}

CheckResult check_gradient(std::uint64_t seed) {
  // Entries below kFloor in magnitude are compared absolutely: central
  // differences carry ~1e-10 of rounding noise at this step size.
  constexpr double kStep = 1e-6, kTol = 1e-5, kFloor = 1e-3;
  Rng rng(hash64(seed, {}, "check.gradient"));
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const ModelSpec spec = random_spec(rng);
    ParamVector w(spec.param_count());
    for (double& v : w.values()) v = rng.normal(0.0, 0.5);
    const Batch batch = random_batch(spec, 1 + rng.below(8), rng);
    const LossGrad lg = loss_and_grad(spec, w, batch);
    for (std::size_t i = 0; i < w.size(); ++i) {
      ParamVector plus = w, minus = w;
      plus[i] += kStep;
      minus[i] -= kStep;
      const double fd = (loss_and_grad(spec, plus, batch).loss -
                         loss_and_grad(spec, minus, batch).loss) /
                        (2.0 * kStep);
      const double scale = std::max({std::abs(fd), std::abs(lg.grad[i]), kFloor});
      worst = std::max(worst, std::abs(fd - lg.grad[i]) / scale);
    }
  }
  return {"gradient_fd", worst < kTol, "max_rel_err=" + sci(worst) + " < " + sci(kTol)};
}

CheckResult check_weighted_mean(std::uint64_t seed) {
  constexpr double kTol = 1e-12;
  Rng rng(hash64(seed, {}, "check.weighted_mean"));
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(8), dim = 1 + rng.below(500);
    std::vector<ClientUpdate> ups;
    for (std::size_t c = 0; c < k; ++c) {
      ClientUpdate u{ParamVector(dim), 1 + rng.below(1000), k - 1 - c, {}};
      for (double& v : u.delta.values()) v = rng.normal(0.0, 10.0);
      ups.push_back(std::move(u));
    }
    const ParamVector got = weighted_mean(ups);
    double total = 0.0;
    for (const auto& u : ups) total += static_cast<double>(u.sample_count);
    for (std::size_t i = 0; i < dim; ++i) {
      // Neumaier-compensated sum of n_k * delta_k, then one division.
      double sum = 0.0, comp = 0.0, magnitude = 0.0;
      for (const auto& u : ups) {
        const double term = static_cast<double>(u.sample_count) * u.delta[i];
        const double t = sum + term;
        comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
        sum = t;
        magnitude += std::abs(term);
      }
      const double expect = (sum + comp) / total;
      const double scale = std::max(std::abs(expect), magnitude / total);
      if (scale > 0.0) worst = std::max(worst, std::abs(got[i] - expect) / scale);
    }
  }
  return {"weighted_mean", worst < kTol, "max_rel_err=" + sci(worst) + " < " + sci(kTol)};
}

CheckResult check_projection(std::uint64_t seed) {
  Rng rng(hash64(seed, {}, "check.projection"));
  bool ok = true;
  double worst_excess = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    ParamVector w(1 + rng.below(50));
    for (double& v : w.values()) v = rng.normal(0.0, 3.0);
    const double radius = 0.1 + 5.0 * rng.uniform();
    const ParamVector p = project_l2(w, radius);
    const double expect = std::min(w.l2_norm(), radius);
    ok = ok && std::abs(p.l2_norm() - expect) <= 1e-12 * expect;
    ok = ok && project_l2(p, radius).bitwise_equal(p);
    if (w.l2_norm() <= radius) ok = ok && p.bitwise_equal(w);
  }

  // Per-step bound during real local training.
  const Dataset ds = make_blobs(3, 4, 40, 1.0, seed);
  const ModelSpec spec = ModelSpec::one_hidden(4, 5, 3);
  for (double radius : {0.5, 3.0}) {
    ClientConfig cfg;
    cfg.batch_size = 16;
    cfg.epochs = 3;
    cfg.learning_rate = 0.5;
    cfg.l2_ball_radius = radius;
    ParamVector w = init_params(spec, seed);
    TrainContext ctx;
    ctx.on_step = [&](std::size_t, const ParamVector& cur) {
      worst_excess = std::max(worst_excess, cur.l2_norm() - radius);
    };
    sgd_train(spec, w, ds, cfg, seed, ctx);
  }
  ok = ok && worst_excess <= 1e-9;
  return {"projection", ok, "max(norm - M)=" + sci(worst_excess) + " <= 1e-09"};
}

CheckResult check_sign_mask(std::uint64_t seed) {
  Rng rng(hash64(seed, {}, "check.sign_mask"));
  AggregationConfig cfg;
  cfg.momentum_beta = 0.9;
  cfg.sign_threshold = 2;
  const std::size_t dim = 64;
  ServerState state = ServerState::initial(ParamVector(dim));
  for (double& v : state.weights.values()) v = rng.normal();
  std::size_t violations = 0;
  for (int round = 0; round < 20; ++round) {
    std::vector<ClientUpdate> ups;
    for (std::size_t k = 0; k < 2; ++k) {
      ClientUpdate u{ParamVector(dim), 10 + rng.below(10), k, {}};
      for (double& v : u.delta.values()) {
        v = rng.below(5) == 0 ? 0.0 : rng.normal();
      }
      ups.push_back(std::move(u));
    }
    const ServerState next = server_step(state, ups, cfg);
    for (std::size_t i = 0; i < dim; ++i) {
      const bool agree = ups[0].delta[i] * ups[1].delta[i] > 0.0;
      if (!agree && next.weights[i] != state.weights[i]) ++violations;
    }
    state = next;
  }
  return {"sign_mask", violations == 0,
          "moved masked coordinates=" + std::to_string(violations) + " == 0"};
}

CheckResult check_momentum(std::uint64_t) {
  constexpr double kTol = 1e-12;
  double worst = 0.0;
  for (double beta : {0.0, 0.5, 0.9}) {
    AggregationConfig cfg;
    cfg.momentum_beta = beta;
    ServerState state = ServerState::initial(ParamVector(1));
    const std::vector<ClientUpdate> ups{{ParamVector(1, 1.0), 1, 0, {}}};
    const int rounds = 20;
    for (int r = 0; r < rounds; ++r) state = server_step(state, ups, cfg);
    // sum_{j=1..R} (1 - beta^j) / (1 - beta)
    const double expect =
        beta == 0.0 ? rounds
                    : (rounds - beta * (1.0 - std::pow(beta, rounds)) / (1.0 - beta)) /
                          (1.0 - beta);
    worst = std::max(worst, std::abs(state.weights[0] - expect) / expect);
  }
  return {"momentum_unroll", worst < kTol, "max_rel_err=" + sci(worst) + " < " + sci(kTol)};
}

CheckResult check_k1_reduction(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.experiment_id = "k1";
  cfg.rounds = 3;
  cfg.num_agents = 1;
  cfg.repetitions = 1;
  cfg.master_seed = seed;
  cfg.dataset = {4, 5, 50, 1.0};
  cfg.partition = {PartitionMode::kIid, 1, 0.0};
  cfg.client.batch_size = 16;

  const RepetitionResult fl = run_once(cfg, 0);

  // Plain SGD, written out step by step.
  const RepetitionSeeds seeds = seeds_for(cfg, 0);
  const ModelSpec spec = cfg.model_spec();
  const Dataset shard = make_partition(cfg, 0).shards.at(0);
  ParamVector w = init_params(spec, seeds.init);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const std::uint64_t s = seeds.client(r, 0);
    for (std::size_t e = 0; e < cfg.client.epochs; ++e) {
      for (const Batch& b : batches(shard, cfg.client.batch_size, hash64(s, {e}, "epoch"))) {
        const LossGrad lg = loss_and_grad(spec, w, b);
        for (std::size_t i = 0; i < w.size(); ++i) {
          w[i] -= cfg.client.learning_rate * (lg.grad[i] + cfg.client.weight_decay * w[i]);
        }
      }
    }
  }
  const bool same = fl.final_weights.bitwise_equal(w);
  return {"k1_reduction", same, same ? "bitwise identical" : "final weights differ"};
}

}  // namespace

std::vector<CheckResult> run_self_checks(std::uint64_t seed) {
  return {check_gradient(seed),   check_weighted_mean(seed), check_projection(seed),
          check_sign_mask(seed),  check_momentum(seed),      check_k1_reduction(seed)};
}

}  // namespace fedsim
