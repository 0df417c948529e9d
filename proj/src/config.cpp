#include "fedsim/config.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

using nlohmann::json;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Reads fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    out = convert<T>(*it, join(path_, key));
  }

  template <typename T>
  void read_optional(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
    } else {
      out = convert<T>(*it, join(path_, key));
    }
  }

  // Returns the sub-object, or nullptr if absent.
  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
    }
  }

 private:
  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      // Integers built in code are signed even when non-negative.
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ConfigError(path, "expected a non-negative integer");
      }
      return v.get<T>();
    } else {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      return v.get<T>();
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const char* mode_name(PartitionMode m) {
  return m == PartitionMode::kIid ? "iid" : "label_shard";
}

const char* arch_name(Architecture a) {
  return a == Architecture::kLinear ? "linear" : "one_hidden";
}

const char* sign_mode_name(SignMode m) {
  return m == SignMode::kAbsoluteSum ? "absolute_sum" : "literal_sum";
}

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& value, const std::string& path,
                const std::pair<const char*, Enum> (&options)[N]) {
  std::string allowed;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(path, "unknown value '" + value + "' (expected one of: " +
                              allowed + ")");
}

json finetune_to_json(const FinetuneConfig& f) {
  return {{"epochs", f.epochs},
          {"batch_size", f.batch_size},
          {"learning_rate", f.learning_rate},
          {"weight_decay", f.weight_decay}};
}

FinetuneConfig finetune_from_json(const json& j, const std::string& path) {
  FinetuneConfig f;
  Section s(j, path);
  s.read("epochs", f.epochs);
  s.read("batch_size", f.batch_size);
  s.read("learning_rate", f.learning_rate);
  s.read("weight_decay", f.weight_decay);
  s.finish();
  return f;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment_id"] = c.experiment_id;
  j["rounds"] = c.rounds;
  j["num_agents"] = c.num_agents;
  j["repetitions"] = c.repetitions;
  j["master_seed"] = c.master_seed;
  j["repeat_identical_seeds"] = c.repeat_identical_seeds;
  j["dataset"] = {{"num_classes", c.dataset.num_classes},
                  {"input_dim", c.dataset.input_dim},
                  {"samples_per_class", c.dataset.samples_per_class},
                  {"cluster_spread", c.dataset.cluster_spread}};
  j["partition"] = {{"mode", mode_name(c.partition.mode)},
                    {"classes_for_first", c.partition.classes_for_first},
                    {"server_fraction", c.partition.server_fraction}};
  j["model"] = {{"architecture", arch_name(c.model.architecture)},
                {"hidden_units", c.model.hidden_units}};
  j["client"] = {{"epochs", c.client.epochs},
                 {"batch_size", c.client.batch_size},
                 {"learning_rate", c.client.learning_rate},
                 {"weight_decay", c.client.weight_decay},
                 {"l2_ball_radius", c.client.l2_ball_radius
                                        ? json(*c.client.l2_ball_radius)
                                        : json(nullptr)},
                 {"grad_noise_std", c.client.grad_noise_std}};
  const AggregationConfig& a = c.aggregation;
  j["aggregation"] = {
      {"server_lr", a.server_lr},
      {"momentum_beta", a.momentum_beta},
      {"sign_threshold", a.sign_threshold ? json(*a.sign_threshold) : json(nullptr)},
      {"sign_mode", sign_mode_name(a.sign_mode)},
      {"finetune", a.finetune ? finetune_to_json(*a.finetune) : json(nullptr)}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.read("experiment_id", c.experiment_id);
  root.read("rounds", c.rounds);
  root.read("num_agents", c.num_agents);
  root.read("repetitions", c.repetitions);
  root.read("master_seed", c.master_seed);
  root.read("repeat_identical_seeds", c.repeat_identical_seeds);

  if (const json* d = root.child("dataset")) {
    Section s(*d, "dataset");
    s.read("num_classes", c.dataset.num_classes);
    s.read("input_dim", c.dataset.input_dim);
    s.read("samples_per_class", c.dataset.samples_per_class);
    s.read("cluster_spread", c.dataset.cluster_spread);
    s.finish();
  }
  if (const json* p = root.child("partition")) {
    Section s(*p, "partition");
    std::string mode = mode_name(c.partition.mode);
    s.read("mode", mode);
    c.partition.mode = parse_enum<PartitionMode>(
        mode, s.path("mode"),
        {{"iid", PartitionMode::kIid}, {"label_shard", PartitionMode::kLabelShard}});
    s.read("classes_for_first", c.partition.classes_for_first);
    s.read("server_fraction", c.partition.server_fraction);
    s.finish();
  }
  if (const json* m = root.child("model")) {
    Section s(*m, "model");
    std::string arch = arch_name(c.model.architecture);
    s.read("architecture", arch);
    c.model.architecture = parse_enum<Architecture>(
        arch, s.path("architecture"),
        {{"linear", Architecture::kLinear}, {"one_hidden", Architecture::kOneHidden}});
    s.read("hidden_units", c.model.hidden_units);
    s.finish();
  }
  if (const json* cl = root.child("client")) {
    Section s(*cl, "client");
    s.read("epochs", c.client.epochs);
    s.read("batch_size", c.client.batch_size);
    s.read("learning_rate", c.client.learning_rate);
    s.read("weight_decay", c.client.weight_decay);
    s.read_optional("l2_ball_radius", c.client.l2_ball_radius);
    s.read("grad_noise_std", c.client.grad_noise_std);
    s.finish();
  }
  if (const json* ag = root.child("aggregation")) {
    Section s(*ag, "aggregation");
    AggregationConfig& a = c.aggregation;
    s.read("server_lr", a.server_lr);
    s.read("momentum_beta", a.momentum_beta);
    s.read_optional("sign_threshold", a.sign_threshold);
    std::string mode = sign_mode_name(a.sign_mode);
    s.read("sign_mode", mode);
    a.sign_mode = parse_enum<SignMode>(
        mode, s.path("sign_mode"),
        {{"absolute_sum", SignMode::kAbsoluteSum}, {"literal_sum", SignMode::kLiteralSum}});
    if (const json* f = s.child("finetune")) {
      if (f->is_null()) {
        a.finetune.reset();
      } else {
        a.finetune = finetune_from_json(*f, s.path("finetune"));
      }
    }
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

Grid grid_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("<grid>", "expected an object of path: [values]");
  Grid grid;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it->is_array()) throw ConfigError(it.key(), "grid values must be an array");
    grid.emplace_back(it.key(), std::vector<json>(it->begin(), it->end()));
  }
  return grid;
}

Grid load_grid(const std::filesystem::path& path) {
  return grid_from_json(read_json_file(path));
}

ExperimentConfig apply_overrides(const ExperimentConfig& base, const json& delta) {
  if (!delta.is_object()) throw ConfigError("<overrides>", "expected an object");
  json j = to_json(base);
  for (auto it = delta.begin(); it != delta.end(); ++it) {
    const std::string& path = it.key();
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = path.find('.', start);
      const std::string key = path.substr(start, dot - start);
      if (!node->is_object() || !node->contains(key)) {
        throw ConfigError(path, "not a configuration field");
      }
      node = &(*node)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *node = *it;
  }
  return config_from_json(j);
}

}  // namespace fedsim
