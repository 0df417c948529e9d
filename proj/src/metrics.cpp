#include "fedsim/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string csv_field(const std::string& s) {
  return s.find_first_of(",\"\n") == std::string::npos ? s : csv_quote(s);
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_csv(const RunSummary& summary) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  const std::string id = csv_field(summary.experiment_id);
  for (std::size_t rep = 0; rep < summary.history.size(); ++rep) {
    for (const RoundRecord& r : summary.history[rep]) {
      out << id << ',' << rep << ',' << r.round << ',' << format_double(r.val_accuracy)
          << ',' << format_double(r.val_loss) << ',' << format_double(r.mean_update_l2)
          << ',' << format_double(r.masked_fraction) << ','
          << format_double(r.conflict_rate) << '\n';
    }
  }
  return out.str();
}

nlohmann::json summary_to_json(const RunSummary& s) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& rep : s.history) {
    nlohmann::json rows = nlohmann::json::array();
    for (const RoundRecord& r : rep) {
      rows.push_back({{"round", r.round},
                      {"val_accuracy", r.val_accuracy},
                      {"val_loss", r.val_loss},
                      {"mean_update_l2", r.mean_update_l2},
                      {"masked_fraction", r.masked_fraction},
                      {"conflict_rate", r.conflict_rate}});
    }
    history.push_back(std::move(rows));
  }
  return {{"experiment", s.experiment_id},
          {"repetitions", s.final_accuracies.size()},
          {"final_acc_mean", s.final_acc_mean},
          {"final_acc_std", s.final_acc_std},
          {"std_undefined", s.std_undefined},
          {"final_accuracies", s.final_accuracies},
          {"history", std::move(history)}};
}

std::string ranking_csv(std::span<const GridCell> ranked) {
  std::ostringstream out;
  out << "rank,cell,final_acc_mean,final_acc_std,delta\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const GridCell& c = ranked[i];
    char cell[32];
    std::snprintf(cell, sizeof cell, "cell_%03zu", c.index);
    out << i + 1 << ',' << cell << ',' << format_double(c.summary.final_acc_mean)
        << ',' << format_double(c.summary.final_acc_std) << ','
        << csv_quote(c.delta.dump()) << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

}  // namespace fedsim
