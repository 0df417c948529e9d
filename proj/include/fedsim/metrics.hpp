#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "json.hpp"

#include "fedsim/experiment.hpp"

namespace fedsim {

inline constexpr const char* kMetricsHeader =
    "experiment,repetition,round,val_accuracy,val_loss,mean_update_l2,"
    "masked_fraction,conflict_rate";

// %.17g: enough digits to round-trip any double.
std::string format_double(double v);

// One row per (repetition, round), repetitions in index order.
std::string metrics_csv(const RunSummary& summary);

nlohmann::json summary_to_json(const RunSummary& summary);

// rank,cell,final_acc_mean,final_acc_std,delta  (cell is the cell_NNN
// directory name; delta is the cell's override object as compact JSON,
// CSV-quoted).
std::string ranking_csv(std::span<const GridCell> ranked);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fedsim
