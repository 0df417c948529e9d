#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fedsim {

struct CheckResult {
  std::string name;
  bool passed = false;
  // Measured value against its tolerance, e.g. "max_rel_err=3.1e-09 < 1e-05".
  std::string detail;
};

// Built-in verification suite behind `fedsim check`:
//   gradient_fd        analytic gradient vs central finite differences
//   weighted_mean      FedAvg mean vs a compensated-summation recomputation
//   projection         L2-ball projection norm, idempotence, per-step bound
//   sign_mask          masked coordinates stay frozen under momentum
//   momentum_unroll    constant-aggregate velocity vs its geometric sum
//   k1_reduction       one-agent FedAvg vs plain SGD, bitwise
std::vector<CheckResult> run_self_checks(std::uint64_t seed);

}  // namespace fedsim
