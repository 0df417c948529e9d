#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/random.hpp"

namespace fedsim {
namespace {

std::size_t round_count(double x) {
  return static_cast<std::size_t>(std::llround(x));
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  return by_class;
}

void shuffle_in_place(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.class_count = class_count;
  out.inputs = Matrix(0, inputs.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.inputs.append_row(inputs.row(i));
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_histogram() const {
  std::vector<std::size_t> hist(class_count, 0);
  for (std::size_t y : labels) ++hist[y];
  return hist;
}

Dataset concat(std::span<const Dataset> parts) {
  Dataset out;
  bool first = true;
  for (const Dataset& part : parts) {
    if (first) {
      out.class_count = part.class_count;
      out.inputs = Matrix(0, part.inputs.cols());
      first = false;
    } else if (part.class_count != out.class_count ||
               (!part.empty() && part.inputs.cols() != out.inputs.cols())) {
      throw InputError("concat: datasets disagree on shape");
    }
    for (std::size_t i = 0; i < part.size(); ++i) {
      out.inputs.append_row(part.inputs.row(i));
      out.labels.push_back(part.labels[i]);
    }
  }
  return out;
}

Dataset make_blobs(std::size_t num_classes, std::size_t input_dim,
                   std::size_t samples_per_class, double cluster_spread,
                   std::uint64_t seed) {
  if (num_classes < 1 || input_dim < 1 || samples_per_class < 1) {
    throw InputError("make_blobs: counts must be >= 1");
  }
  if (!(cluster_spread > 0.0) || !std::isfinite(cluster_spread)) {
    throw InputError("make_blobs: cluster_spread must be > 0");
  }
  Rng rng(hash64(seed, {}, "blobs"));

  // Classes k and k + groups share an anchor and sit on opposite sides of
  // it along a random direction, exactly kCenterSeparation * spread apart.
  // Anchors are spread far enough that cross-group centers stay further
  // apart than that.
  const std::size_t groups = (num_classes + 1) / 2;
  Matrix anchors(groups, input_dim), offsets(groups, input_dim);
  for (std::size_t g = 0; g < groups; ++g) {
    for (double& v : anchors.row(g)) v = rng.normal();
    double norm2 = 0.0;
    for (double& v : offsets.row(g)) {
      v = rng.normal();
      norm2 += v * v;
    }
    const double scale = 0.5 * kCenterSeparation * cluster_spread / std::sqrt(norm2);
    for (double& v : offsets.row(g)) v *= scale;
  }
  if (groups > 1) {
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < groups; ++a) {
      for (std::size_t b = a + 1; b < groups; ++b) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < input_dim; ++i) {
          const double diff = anchors(a, i) - anchors(b, i);
          d2 += diff * diff;
        }
        min_dist = std::min(min_dist, std::sqrt(d2));
      }
    }
    const double scale = kAnchorSeparation * cluster_spread / min_dist;
    for (std::size_t g = 0; g < groups; ++g) {
      for (double& v : anchors.row(g)) v *= scale;
    }
  }
  Matrix centers(num_classes, input_dim);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const std::size_t g = k % groups;
    const double side = k < groups ? 1.0 : -1.0;
    for (std::size_t i = 0; i < input_dim; ++i) {
      centers(k, i) = anchors(g, i) + side * offsets(g, i);
    }
  }

  Dataset ds;
  ds.class_count = num_classes;
  ds.inputs = Matrix(num_classes * samples_per_class, input_dim);
  ds.labels.reserve(num_classes * samples_per_class);
  std::size_t r = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t s = 0; s < samples_per_class; ++s, ++r) {
      for (std::size_t i = 0; i < input_dim; ++i) {
        ds.inputs(r, i) = centers(k, i) + cluster_spread * rng.normal();
      }
      ds.labels.push_back(k);
    }
  }
  return ds;
}

void PartitionPlan::validate(std::size_t class_count) const {
  if (num_agents < 1) throw InputError("partition: num_agents must be >= 1");
  if (!(server_fraction >= 0.0 && server_fraction <= 0.5)) {
    throw InputError("partition: server_fraction must lie in [0, 0.5]");
  }
  if (mode == PartitionMode::kLabelShard) {
    if (num_agents != 2) {
      throw InputError("partition: label_shard requires exactly 2 agents");
    }
    if (classes_for_first < 1 || classes_for_first >= class_count) {
      throw InputError("partition: classes_for_first must lie in [1, " +
                       std::to_string(class_count) + ")");
    }
  }
}

Partition partition(const Dataset& ds, const PartitionPlan& plan,
                    std::uint64_t seed) {
  plan.validate(ds.class_count);
  const auto by_class = indices_by_class(ds);
  const std::size_t agents = plan.num_agents;

  std::vector<std::size_t> val_idx, hold_idx;
  std::vector<std::vector<std::size_t>> shard_idx(agents);

  for (std::size_t k = 0; k < ds.class_count; ++k) {
    std::vector<std::size_t> idx = by_class[k];
    Rng rng(hash64(seed, {k}, "partition"));
    shuffle_in_place(idx, rng);

    const std::size_t n = idx.size();
    const std::size_t n_val = round_count(kValidationFraction * n);
    const std::size_t n_hold =
        round_count(plan.server_fraction * static_cast<double>(n - n_val));
    const std::size_t n_rest = n - n_val - n_hold;
    const std::size_t need_rest = plan.mode == PartitionMode::kIid ? agents : 1;
    if (n_val == 0 || (plan.server_fraction > 0.0 && n_hold == 0) ||
        n_rest < need_rest) {
      throw InputError("partition: class " + std::to_string(k) + " has " +
                       std::to_string(n) +
                       " samples, too few for the validation/holdout/shard "
                       "strata");
    }

    auto it = idx.begin();
    val_idx.insert(val_idx.end(), it, it + n_val);
    it += n_val;
    hold_idx.insert(hold_idx.end(), it, it + n_hold);
    it += n_hold;
    if (plan.mode == PartitionMode::kIid) {
      // Rotating the starting agent per class keeps shard totals balanced.
      for (std::size_t j = 0; it != idx.end(); ++it, ++j) {
        shard_idx[(k + j) % agents].push_back(*it);
      }
    } else {
      auto& dest = shard_idx[k < plan.classes_for_first ? 0 : 1];
      dest.insert(dest.end(), it, idx.end());
    }
  }

  Partition out;
  out.validation = ds.subset(val_idx);
  out.server_holdout = ds.subset(hold_idx);
  for (const auto& s : shard_idx) out.shards.push_back(ds.subset(s));
  return out;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(hash64(seed, {}, "shuffle"));
  shuffle_in_place(order, rng);
  return order;
}

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size,
                           std::uint64_t epoch_seed) {
  if (batch_size < 1) throw InputError("batches: batch_size must be >= 1");
  const auto order = shuffled_order(ds.size(), epoch_seed);
  std::vector<Batch> out;
  out.reserve((ds.size() + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    Batch b;
    b.inputs = Matrix(0, ds.inputs.cols());
    b.labels.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i) {
      b.inputs.append_row(ds.inputs.row(order[i]));
      b.labels.push_back(ds.labels[order[i]]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

Evaluation evaluate(const ModelSpec& spec, const ParamVector& w,
                    const Dataset& ds) {
  return evaluate(spec, w, ds.inputs, ds.labels);
}

double hypothesis_conflict_rate(const ModelSpec& spec, const ParamVector& w_a,
                                const ParamVector& w_b, const Dataset& probe) {
  return hypothesis_conflict_rate(spec, w_a, w_b, probe.inputs);
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  const std::size_t d = ds.inputs.cols();
  for (std::size_t i = 0; i < d; ++i) out << 'x' << i << ',';
  out << "label\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (double v : ds.inputs.row(r)) out << format_double(v) << ',';
    out << ds.labels[r] << '\n';
  }
}

Dataset read_csv(const std::filesystem::path& path, std::size_t class_count) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": empty file");
  const std::size_t columns =
      static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2 || line.substr(line.rfind(',') + 1) != "label") {
    throw InputError(path.string() + ": header must end with 'label'");
  }
  const std::size_t d = columns - 1;

  Dataset ds;
  ds.inputs = Matrix(0, d);
  std::vector<double> row(d);
  std::size_t max_label = 0;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::getline(fields, cell, ',')) {
        throw InputError(path.string() + ":" + std::to_string(line_no) +
                         ": too few columns");
      }
      row[i] = std::stod(cell);
      if (!std::isfinite(row[i])) {
        throw InputError(path.string() + ":" + std::to_string(line_no) +
                         ": non-finite value");
      }
    }
    if (!std::getline(fields, cell, ',')) {
      throw InputError(path.string() + ":" + std::to_string(line_no) +
                       ": missing label");
    }
    const std::size_t label = std::stoull(cell);
    ds.inputs.append_row(row);
    ds.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (ds.empty()) throw InputError(path.string() + ": no data rows");
  ds.class_count = class_count == 0 ? max_label + 1 : class_count;
  if (max_label >= ds.class_count) {
    throw InputError(path.string() + ": label exceeds class_count");
  }
  return ds;
}

}  // namespace fedsim
