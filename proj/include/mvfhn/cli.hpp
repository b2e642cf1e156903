#pragma once

// Command-line surface: check, simulate, picard, pullback and w2.

#include "mvfhn/io.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace mvfhn {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_assumption = 2,
  exit_not_converged = 3,
  exit_class_violation = 4,
};

/// args excludes the program name; env holds NAME=value strings.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::vector<std::string>& env = {});

/// Canonical or zero coefficients from the model.* and grid.* keys.
CanonicalInstance instance_from_config(const RunConfig& cfg, const SpatialGrid& grid);
GridPtr grid_from_config(const RunConfig& cfg);
SchemeConfig scheme_from_config(const RunConfig& cfg);

/// Smoothing over one forcing period when the forcing is periodic.
MonitorOptions monitor_options(double omega);

}  // namespace mvfhn
