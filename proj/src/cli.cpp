#include "fedsim/cli.hpp"

#include <cstdio>
#include <functional>
#include <string>

#include "fedsim/config.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/selfcheck.hpp"

namespace fedsim {
namespace {

namespace fs = std::filesystem;

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

void write_run(const fs::path& dir, const RunSummary& s) {
  fs::create_directories(dir);
  write_text(dir / "metrics.csv", metrics_csv(s));
  write_text(dir / "summary.json", summary_to_json(s).dump(2) + "\n");
}

void print_summary(std::ostream& out, const RunSummary& s) {
  out << s.experiment_id << ": final val accuracy " << percent(s.final_acc_mean)
      << " +/- " << percent(s.final_acc_std) << " over "
      << s.final_accuracies.size() << " repetition(s)";
  if (s.std_undefined) out << " [warning: std undefined for one repetition, reported as 0]";
  out << '\n';
}

// Maps the library's exceptions onto exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const InputError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const DivergenceError& e) {
    err << "numerical divergence: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

}  // namespace

int cmd_run(const fs::path& config_path, const fs::path& out_dir,
            std::size_t jobs, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_config(config_path);
    const RunSummary s = run(cfg, jobs);
    write_run(out_dir, s);
    print_summary(out, s);
    return kExitOk;
  });
}

int cmd_grid(const fs::path& config_path, const fs::path& grid_path,
             const fs::path& out_dir, std::size_t jobs, std::ostream& out,
             std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig base = load_config(config_path);
    const Grid grid = load_grid(grid_path);
    const auto ranked = grid_search(base, grid, jobs);
    for (const GridCell& cell : ranked) {
      char name[32];
      std::snprintf(name, sizeof name, "cell_%03zu", cell.index);
      const fs::path dir = out_dir / name;
      write_run(dir, cell.summary);
      write_text(dir / "config.json", to_json(cell.config).dump(2) + "\n");
    }
    write_text(out_dir / "ranking.csv", ranking_csv(ranked));
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      out << '#' << i + 1 << ' ' << ranked[i].delta.dump() << "  ";
      print_summary(out, ranked[i].summary);
    }
    return kExitOk;
  });
}

int cmd_check(std::uint64_t seed, bool corrupt_gradient, std::ostream& out) {
  debug::set_gradient_corruption(corrupt_gradient);
  const auto results = run_self_checks(seed);
  debug::set_gradient_corruption(false);
  bool all = true;
  for (const CheckResult& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << '\n';
    all = all && r.passed;
  }
  out << (all ? "all checks passed" : "self-check FAILED") << '\n';
  return all ? kExitOk : kExitCheckFailed;
}

}  // namespace fedsim
