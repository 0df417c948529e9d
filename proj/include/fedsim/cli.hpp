#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>

namespace fedsim {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitConfigError = 2,
  kExitDiverged = 3,
};

// `fedsim run`: writes metrics.csv and summary.json into out_dir.
int cmd_run(const std::filesystem::path& config_path,
            const std::filesystem::path& out_dir, std::size_t jobs,
            std::ostream& out, std::ostream& err);

// `fedsim grid`: one cell_NNN/ subdirectory per grid cell plus ranking.csv.
int cmd_grid(const std::filesystem::path& config_path,
             const std::filesystem::path& grid_path,
             const std::filesystem::path& out_dir, std::size_t jobs,
             std::ostream& out, std::ostream& err);

// `fedsim check`: built-in verification suite; one PASS/FAIL line per check.
int cmd_check(std::uint64_t seed, bool corrupt_gradient, std::ostream& out);

}  // namespace fedsim
