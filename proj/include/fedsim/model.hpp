#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim {

enum class Architecture { kLinear, kOneHidden };

// Softmax classifier over a flat parameter vector.
//
// Parameter layout, each weight matrix row-major as [fan_in x fan_out]:
//   Linear:     W[d x c], b[c]
//   OneHidden:  W1[d x h], b1[h], W2[h x c], b2[c]   (tanh hidden layer)
struct ModelSpec {
  Architecture architecture = Architecture::kLinear;
  std::size_t input_dim = 1;
  std::size_t num_classes = 2;
  std::size_t hidden_units = 0;  // only used by kOneHidden

  static ModelSpec linear(std::size_t input_dim, std::size_t num_classes);
  static ModelSpec one_hidden(std::size_t input_dim, std::size_t hidden_units,
                              std::size_t num_classes);

  // Throws InputError when a dimension is out of range.
  void validate() const;
  std::size_t param_count() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct Batch {
  Matrix inputs;
  std::vector<std::size_t> labels;
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Weights ~ N(0, 1/fan_in), biases exactly zero.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Mean softmax cross-entropy over the rows and its analytic gradient.
LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& w,
                       const Matrix& inputs,
                       std::span<const std::size_t> labels);

inline LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& w,
                              const Batch& batch) {
  return loss_and_grad(spec, w, batch.inputs, batch.labels);
}

// Class scores (pre-softmax) for a single input row.
std::vector<double> logits(const ModelSpec& spec, const ParamVector& w,
                           std::span<const double> input);

// Argmax class per row; ties go to the lowest class index.
std::vector<std::size_t> predict(const ModelSpec& spec, const ParamVector& w,
                                 const Matrix& inputs);

Evaluation evaluate(const ModelSpec& spec, const ParamVector& w,
                    const Matrix& inputs, std::span<const std::size_t> labels);

// Fraction of probe rows on which the two models predict different classes.
double hypothesis_conflict_rate(const ModelSpec& spec, const ParamVector& w_a,
                                const ParamVector& w_b, const Matrix& probe);

namespace debug {
// Fault injection for the self-check: when enabled, loss_and_grad adds a
// fixed offset to the first gradient entry.
void set_gradient_corruption(bool enabled);
bool gradient_corruption();
}  // namespace debug

}  // namespace fedsim
