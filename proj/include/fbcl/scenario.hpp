#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fbcl/closed_loop.hpp"
#include "fbcl/feedback.hpp"
#include "fbcl/flux.hpp"
#include "fbcl/lyapunov.hpp"
#include "fbcl/solver.hpp"

namespace fbcl {

inline constexpr int kReportSchemaVersion = 1;

using json = nlohmann::json;
using InitialDatum = std::vector<std::function<double(double)>>;

// Parsers for the config building blocks. `where` is the JSON pointer of `j`
// and prefixes every ConfigError.
Flux flux_from_json(const json& j, const std::string& where);
FeedbackMap feedback_from_json(const json& j, int n, const std::string& where);
InitialDatum initial_datum_from_json(const json& j, int n, const std::string& where);
Inflow inflow_from_json(const json& j, int n, const std::string& where);
Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where);

enum class LoopMode { Direct, MethodOfSteps, Both };

struct CheckSpec {
  Condition condition = Condition::CondStab;
  Eigen::VectorXd weights;
  double mu = 0.0;
  Box box;
  std::size_t samples = 4096;
  bool expect_pass = true;
};

struct LyapunovSpec {
  Functional functional;
  /// Guaranteed decay rate a * rate, asserted pairwise when set.
  std::optional<double> decay_rate;
  /// Fitted slope must not exceed this.
  std::optional<double> max_slope;
  bool report_m0 = false;
};

struct BlowupSpec {
  std::vector<double> c;
  double M = 4096.0;
  double horizon = 2.0;
  int n_cells = 1600;
  /// Expected blow-up time is expected_factor / c.
  double expected_factor = 1.0;
  double rel_tol = 0.1;
};

struct DelaySpec {
  Inflow w;
  Inflow z;
  double t_tilde = 0.0;
  double window_fraction = 0.9;
  double max_deviation = 1e-6;
  /// Second grid for the refinement check; 0 disables it.
  int refined_cells = 0;
  double min_reduction = 10.0;
};

struct Scenario {
  std::string name;
  std::vector<Flux> fluxes;
  std::optional<FeedbackMap> feedback;
  InitialDatum u0;
  Grid grid;
  double horizon = 1.0;
  LoopMode mode = LoopMode::Direct;
  int snapshot_stride = 1;
  double mos_gap_factor = 20.0;
  std::vector<CheckSpec> checks;
  std::vector<LyapunovSpec> lyapunov;
  std::optional<BlowupSpec> blowup;
  std::optional<DelaySpec> delay;
  std::optional<std::pair<double, double>> convergence_ratio;
  std::string output_dir;
  json certify;

  int n() const { return static_cast<int>(fluxes.size()); }
  /// min_i a_lower(f_i)
  double a_lower() const;
};

Scenario parse_scenario(const json& j);
/// Reads and parses a config file; parse errors carry line and column.
Scenario load_scenario(const std::string& path);

/// Output directory: $FBCL_OUTPUT_DIR/<name> when the variable is set,
/// otherwise the config's output_dir (default "fbcl_out/<name>").
std::string resolve_output_dir(const Scenario& s);

struct Outcome {
  int exit_code = 0;
  json report;
};

/// Runs checks, simulations and Lyapunov analysis, writes state.csv,
/// traces.csv, feedback.csv, lyapunov.csv and report.json into out_dir.
Outcome run_scenario(const Scenario& s, const std::string& out_dir);

/// Largest certified rate for each of the three conditions.
Outcome certify_scenario(const Scenario& s);

/// Final-time L1 errors of run_direct on successively doubled grids, against
/// the exact solution for linear fluxes with linear feedback and against the
/// finest grid otherwise.
Outcome convergence_study(const Scenario& s, int refinements);

Outcome delay_study(const Scenario& s);

}  // namespace fbcl
