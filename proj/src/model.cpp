#include "fedsim/model.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/random.hpp"

namespace fedsim {
namespace {

std::atomic<bool> g_corrupt_gradient{false};
constexpr double kCorruptionOffset = 1e-2;

void check_params(const ModelSpec& spec, const ParamVector& w) {
  if (w.size() != spec.param_count()) {
    throw InputError("parameter vector has " + std::to_string(w.size()) +
                     " entries, model expects " +
                     std::to_string(spec.param_count()));
  }
}

void check_inputs(const ModelSpec& spec, const Matrix& inputs) {
  if (inputs.cols() != spec.input_dim) {
    throw InputError("inputs have " + std::to_string(inputs.cols()) +
                     " columns, model expects " +
                     std::to_string(spec.input_dim));
  }
}

void check_labels(const ModelSpec& spec, const Matrix& inputs,
                  std::span<const std::size_t> labels) {
  if (labels.size() != inputs.rows()) {
    throw InputError("label count " + std::to_string(labels.size()) +
                     " does not match row count " +
                     std::to_string(inputs.rows()));
  }
  for (std::size_t y : labels) {
    if (y >= spec.num_classes) {
      throw InputError("label " + std::to_string(y) + " out of range for " +
                       std::to_string(spec.num_classes) + " classes");
    }
  }
}

// Offsets of each block inside the flat parameter vector.
struct Layout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

Layout layout_of(const ModelSpec& spec) {
  Layout l;
  const std::size_t d = spec.input_dim, c = spec.num_classes;
  if (spec.architecture == Architecture::kLinear) {
    l.w2 = 0;
    l.b2 = d * c;
  } else {
    const std::size_t h = spec.hidden_units;
    l.w1 = 0;
    l.b1 = d * h;
    l.w2 = l.b1 + h;
    l.b2 = l.w2 + h * c;
  }
  return l;
}

// Forward pass for one row. `hidden` receives tanh activations (OneHidden
// only); `scores` receives the logits.
void forward(const ModelSpec& spec, const Layout& l, std::span<const double> w,
             std::span<const double> x, std::vector<double>& hidden,
             std::vector<double>& scores) {
  const std::size_t c = spec.num_classes;
  std::span<const double> features = x;
  if (spec.architecture == Architecture::kOneHidden) {
    const std::size_t h = spec.hidden_units;
    hidden.assign(w.begin() + l.b1, w.begin() + l.b1 + h);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xi = x[i];
      const double* row = w.data() + l.w1 + i * h;
      for (std::size_t k = 0; k < h; ++k) hidden[k] += xi * row[k];
    }
    for (double& a : hidden) a = std::tanh(a);
    features = hidden;
  }
  scores.assign(w.begin() + l.b2, w.begin() + l.b2 + c);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double fi = features[i];
    const double* row = w.data() + l.w2 + i * c;
    for (std::size_t j = 0; j < c; ++j) scores[j] += fi * row[j];
  }
}

// Turns scores into softmax probabilities in place and returns
// log-sum-exp of the original scores.
double softmax_inplace(std::vector<double>& scores) {
  const double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - m);
    sum += s;
  }
  for (double& s : scores) s /= sum;
#ifndef NDEBUG
  double check = 0.0;
  for (double s : scores) check += s;
  assert(std::abs(check - 1.0) <= 1e-12);
#endif
  return m + std::log(sum);
}

std::size_t argmax_lowest(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return best;
}

}  // namespace

ModelSpec ModelSpec::linear(std::size_t input_dim, std::size_t num_classes) {
  return {Architecture::kLinear, input_dim, num_classes, 0};
}

ModelSpec ModelSpec::one_hidden(std::size_t input_dim, std::size_t hidden_units,
                                std::size_t num_classes) {
  return {Architecture::kOneHidden, input_dim, num_classes, hidden_units};
}

void ModelSpec::validate() const {
  if (input_dim < 1) throw InputError("model input_dim must be >= 1");
  if (num_classes < 2) throw InputError("model num_classes must be >= 2");
  if (architecture == Architecture::kOneHidden && hidden_units < 1) {
    throw InputError("model hidden_units must be >= 1");
  }
}

std::size_t ModelSpec::param_count() const {
  if (architecture == Architecture::kLinear) {
    return input_dim * num_classes + num_classes;
  }
  return input_dim * hidden_units + hidden_units +
         hidden_units * num_classes + num_classes;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector w(spec.param_count());
  const Layout l = layout_of(spec);
  Rng rng(hash64(seed, {}, "init_params"));
  auto fill = [&](std::size_t offset, std::size_t fan_in,
                  std::size_t fan_out) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t k = 0; k < fan_in * fan_out; ++k) {
      w[offset + k] = rng.normal(0.0, scale);
    }
  };
  if (spec.architecture == Architecture::kLinear) {
    fill(l.w2, spec.input_dim, spec.num_classes);
  } else {
    fill(l.w1, spec.input_dim, spec.hidden_units);
    fill(l.w2, spec.hidden_units, spec.num_classes);
  }
  return w;
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& w,
                       const Matrix& inputs,
                       std::span<const std::size_t> labels) {
  spec.validate();
  check_params(spec, w);
  check_inputs(spec, inputs);
  check_labels(spec, inputs, labels);
  if (inputs.rows() == 0) throw InputError("loss_and_grad: empty batch");

  const Layout l = layout_of(spec);
  const std::size_t c = spec.num_classes;
  const std::size_t h = spec.hidden_units;
  const bool deep = spec.architecture == Architecture::kOneHidden;
  std::span<const double> wv = w.values();

  LossGrad out{0.0, ParamVector(w.size())};
  std::span<double> g = out.grad.values();
  std::vector<double> hidden, probs, dhidden(h);

  for (std::size_t n = 0; n < inputs.rows(); ++n) {
    auto x = inputs.row(n);
    forward(spec, l, wv, x, hidden, probs);
    const std::size_t y = labels[n];
    const double target_score = probs[y];
    const double lse = softmax_inplace(probs);
    out.loss += lse - target_score;

    probs[y] -= 1.0;  // d loss / d scores
    std::span<const double> features = deep ? std::span<const double>(hidden) : x;
    for (std::size_t i = 0; i < features.size(); ++i) {
      double* grow = g.data() + l.w2 + i * c;
      for (std::size_t j = 0; j < c; ++j) grow[j] += features[i] * probs[j];
    }
    for (std::size_t j = 0; j < c; ++j) g[l.b2 + j] += probs[j];

    if (deep) {
      for (std::size_t k = 0; k < h; ++k) {
        const double* wrow = wv.data() + l.w2 + k * c;
        double dk = 0.0;
        for (std::size_t j = 0; j < c; ++j) dk += wrow[j] * probs[j];
        dhidden[k] = dk * (1.0 - hidden[k] * hidden[k]);
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        double* grow = g.data() + l.w1 + i * h;
        for (std::size_t k = 0; k < h; ++k) grow[k] += x[i] * dhidden[k];
      }
      for (std::size_t k = 0; k < h; ++k) g[l.b1 + k] += dhidden[k];
    }
  }

  const double inv_n = 1.0 / static_cast<double>(inputs.rows());
  out.loss *= inv_n;
  for (double& v : g) v *= inv_n;
  if (g_corrupt_gradient.load(std::memory_order_relaxed)) {
    g[0] += kCorruptionOffset;
  }
  return out;
}

std::vector<double> logits(const ModelSpec& spec, const ParamVector& w,
                           std::span<const double> input) {
  spec.validate();
  check_params(spec, w);
  if (input.size() != spec.input_dim) {
    throw InputError("input row has " + std::to_string(input.size()) +
                     " entries, model expects " +
                     std::to_string(spec.input_dim));
  }
  std::vector<double> hidden, scores;
  forward(spec, layout_of(spec), w.values(), input, hidden, scores);
  return scores;
}

std::vector<std::size_t> predict(const ModelSpec& spec, const ParamVector& w,
                                 const Matrix& inputs) {
  spec.validate();
  check_params(spec, w);
  check_inputs(spec, inputs);
  const Layout l = layout_of(spec);
  std::vector<double> hidden, scores;
  std::vector<std::size_t> out(inputs.rows());
  for (std::size_t n = 0; n < inputs.rows(); ++n) {
    forward(spec, l, w.values(), inputs.row(n), hidden, scores);
    out[n] = argmax_lowest(scores);
  }
  return out;
}

Evaluation evaluate(const ModelSpec& spec, const ParamVector& w,
                    const Matrix& inputs,
                    std::span<const std::size_t> labels) {
  spec.validate();
  check_params(spec, w);
  check_inputs(spec, inputs);
  check_labels(spec, inputs, labels);
  if (inputs.rows() == 0) throw InputError("evaluate: empty dataset");

  const Layout l = layout_of(spec);
  std::vector<double> hidden, scores;
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t n = 0; n < inputs.rows(); ++n) {
    forward(spec, l, w.values(), inputs.row(n), hidden, scores);
    if (argmax_lowest(scores) == labels[n]) ++correct;
    const double target_score = scores[labels[n]];
    loss += softmax_inplace(scores) - target_score;
  }
  const double n = static_cast<double>(inputs.rows());
  return {static_cast<double>(correct) / n, loss / n};
}

double hypothesis_conflict_rate(const ModelSpec& spec, const ParamVector& w_a,
                                const ParamVector& w_b, const Matrix& probe) {
  if (probe.rows() == 0) {
    throw InputError("hypothesis_conflict_rate: empty probe set");
  }
  const auto a = predict(spec, w_a, probe);
  const auto b = predict(spec, w_b, probe);
  std::size_t differ = 0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    if (a[n] != b[n]) ++differ;
  }
  return static_cast<double>(differ) / static_cast<double>(a.size());
}

namespace debug {
void set_gradient_corruption(bool enabled) {
  g_corrupt_gradient.store(enabled, std::memory_order_relaxed);
}
bool gradient_corruption() {
  return g_corrupt_gradient.load(std::memory_order_relaxed);
}
}  // namespace debug

}  // namespace fedsim
