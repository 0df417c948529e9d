#pragma once

// Independent reference computations used by the unit and acceptance
// suites. Nothing here calls into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fedsim/aggregate.hpp"
#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/random.hpp"

namespace fedsim::oracle {

// Entry-wise |a - b| / max(|a|, |b|, floor). The floor keeps entries that
// are zero up to rounding from dominating the ratio.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite differences of the mean loss, one coordinate at a time.
inline std::vector<double> fd_gradient(const ModelSpec& spec, const ParamVector& w,
                                       const Batch& batch, double h = 1e-6) {
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    ParamVector plus = w, minus = w;
    plus[i] += h;
    minus[i] -= h;
    g[i] = (loss_and_grad(spec, plus, batch).loss - loss_and_grad(spec, minus, batch).loss) /
           (2.0 * h);
  }
  return g;
}

// Neumaier-compensated sum.
inline double compensated_sum(std::span<const double> terms) {
  double sum = 0.0, comp = 0.0;
  for (double t : terms) {
    const double s = sum + t;
    comp += std::abs(sum) >= std::abs(t) ? (sum - s) + t : (t - s) + sum;
    sum = s;
  }
  return sum + comp;
}

// sum_k n_k * delta_k / sum_k n_k with clients visited in sorted id order
// and each coordinate summed with compensation.
inline std::vector<double> weighted_mean_reference(std::span<const ClientUpdate> ups) {
  std::vector<const ClientUpdate*> sorted;
  for (const auto& u : ups) sorted.push_back(&u);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return a->client_id < b->client_id; });
  double total = 0.0;
  for (auto* u : sorted) total += static_cast<double>(u->sample_count);
  std::vector<double> out(ups.front().delta.size());
  std::vector<double> terms(sorted.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      terms[k] = static_cast<double>(sorted[k]->sample_count) * sorted[k]->delta[i];
    }
    out[i] = compensated_sum(terms) / total;
  }
  return out;
}

// Plain minibatch SGD written out directly:
//   w <- w - lr * (grad + decay * w)
// with the epoch order taken from batches(data, B, hash64(seed, {e}, "epoch")).
inline void plain_sgd(const ModelSpec& spec, ParamVector& w, const Dataset& data,
                      std::size_t epochs, std::size_t batch_size, double lr, double decay,
                      std::uint64_t seed) {
  for (std::size_t e = 0; e < epochs; ++e) {
    for (const Batch& b : batches(data, batch_size, hash64(seed, {e}, "epoch"))) {
      const LossGrad lg = loss_and_grad(spec, w, b);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (lg.grad[i] + decay * w[i]);
    }
  }
}

// Random softmax-classifier instance for gradient checks.
struct Instance {
  ModelSpec spec;
  ParamVector w;
  Batch batch;
};

inline Instance random_instance(Rng& rng) {
  Instance in;
  const std::size_t d = 1 + rng.below(6), c = 2 + rng.below(5);
  in.spec = rng.below(2) == 0 ? ModelSpec::linear(d, c)
                              : ModelSpec::one_hidden(d, 1 + rng.below(8), c);
  in.w = ParamVector(in.spec.param_count());
  for (double& v : in.w.values()) v = rng.normal(0.0, 0.7);
  const std::size_t rows = 1 + rng.below(10);
  in.batch.inputs = Matrix(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (double& v : in.batch.inputs.row(r)) v = rng.normal(0.0, 1.5);
    in.batch.labels.push_back(rng.below(c));
  }
  return in;
}

}  // namespace fedsim::oracle
