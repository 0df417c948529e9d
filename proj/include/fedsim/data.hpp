#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

struct Dataset {
  Matrix inputs;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  // Rows selected by `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_histogram() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Rows of every dataset in argument order. All parts must share input
// width and class_count; empty parts are skipped.
Dataset concat(std::span<const Dataset> parts);

// Fixed share of each class reserved for validation by partition().
inline constexpr double kValidationFraction = 0.2;

// Distance between the two centers of a class pair, in units of
// cluster_spread. This is also the smallest center distance overall.
inline constexpr double kCenterSeparation = 4.0;

// Smallest distance between pair anchors, in units of cluster_spread.
inline constexpr double kAnchorSeparation = 10.0;

// One isotropic Gaussian cluster per class. Classes k and k + ceil(c/2)
// share a random anchor and sit on opposite sides of it, exactly
// kCenterSeparation * spread apart; anchors are rescaled so the closest
// two are kAnchorSeparation * spread apart. Every center is therefore at
// least kCenterSeparation * spread from every other, and with the default
// LabelShard(5) split each close pair straddles the two agents.
// Rows are ordered class by class.
Dataset make_blobs(std::size_t num_classes, std::size_t input_dim,
                   std::size_t samples_per_class, double cluster_spread,
                   std::uint64_t seed);

enum class PartitionMode { kIid, kLabelShard };

struct PartitionPlan {
  PartitionMode mode = PartitionMode::kIid;
  std::size_t num_agents = 2;
  std::size_t classes_for_first = 0;  // LabelShard only
  double server_fraction = 0.0;

  // Throws InputError if the plan cannot apply to `class_count` classes.
  void validate(std::size_t class_count) const;

  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

struct Partition {
  std::vector<Dataset> shards;
  Dataset server_holdout;
  Dataset validation;
};

// Splits `ds` into a stratified validation set, a stratified server holdout
// and per-agent shards:
//
//  1. per class, round(0.2 * n_c) samples go to validation;
//  2. per class, round(server_fraction * remaining_c) go to the holdout;
//  3. IID deals each class round-robin across agents; LabelShard(k) gives
//     classes [0, k) to agent 0 and the rest to agent 1.
//
// Which samples land where is decided by a per-class shuffle seeded from
// `seed`. Throws InputError when a class is too small for the strata.
Partition partition(const Dataset& ds, const PartitionPlan& plan,
                    std::uint64_t seed);

// Shuffles the rows with `epoch_seed` and cuts them into consecutive
// batches of `batch_size`; the last batch may be short.
std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size,
                           std::uint64_t epoch_seed);

// The row order used by batches().
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

Evaluation evaluate(const ModelSpec& spec, const ParamVector& w,
                    const Dataset& ds);

double hypothesis_conflict_rate(const ModelSpec& spec, const ParamVector& w_a,
                                const ParamVector& w_b, const Dataset& probe);

// CSV with header `x0,...,x{d-1},label`; values printed with 17
// significant digits so a dump/load cycle is exact.
void write_csv(const Dataset& ds, const std::filesystem::path& path);

// class_count defaults to max(label) + 1 when zero.
Dataset read_csv(const std::filesystem::path& path,
                 std::size_t class_count = 0);

}  // namespace fedsim
