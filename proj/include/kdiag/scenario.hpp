#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kdiag/psi_function.hpp"
#include "kdiag/space_spec.hpp"

namespace kdiag {

// One experiment description, loaded from a single JSON document.  The seed
// is mandatory and every run writes a manifest echoing the full config, so a
// run is reproducible from its output directory alone.
struct ScenarioConfig {
  std::string scenario;  // mult1d | multnd | appendixA | shift_certificate |
                         // sweep_psi
  Eigen::Index d = 0;
  int n = 1;
  std::string mesh = "uniform";  // uniform (weight 1/d) | unit (weight 1)
  std::vector<std::string> spaces;
  std::vector<std::string> psis;
  int m_min = 0;
  int m_max = 0;
  int k_max = 5;
  double epsilon = 0.1;
  double tau_q = 0.5;  // sweep_psi feasibility probe
  int m_cap = 60;
  std::uint64_t seed = 0;
  std::string output_dir;
  bool dump_operators = false;
  bool dump_spectrum = false;
  int workers = 0;  // 0: hardware concurrency

  static ScenarioConfig from_json_text(const std::string& text);
  static ScenarioConfig from_json_file(const std::string& path);
  std::string to_json_text() const;

  // Structural validation: known scenario, parseable spaces and psis,
  // required fields present.  Throws ValidationError.
  void validate() const;
};

// CSV columns, exactly: scenario,d,n,index,space,metric,measured,bound,
// slack,wall_ms.  slack = bound - measured, recomputed at emission; bound
// values are recomputed from the certified formulas, never copied.
struct ResultRow {
  std::string scenario;
  Eigen::Index d = 0;
  int n = 1;
  double index = 0;
  std::string space;
  std::string metric;
  double measured = 0;
  double bound = 0;
  long wall_ms = 0;
};

std::string rows_to_csv(const std::vector<ResultRow>& rows);

struct RunOutcome {
  int exit_code = 0;          // 0 ok, 2 config, 3 precondition, 1 runtime
  std::string error_kind;     // "config-error" | "precondition-error" | ...
  std::string message;
  std::vector<ResultRow> rows;
  std::string result_json;    // scenario-level summary written to result.json
};

// Runs the scenario, writing manifest.json, results.csv and result.json
// (plus optional ops.json / spectrum.csv) into config.output_dir.
RunOutcome run_scenario(const ScenarioConfig& config);

// Static SVG convergence plot of a results.csv: one measured curve and one
// dashed bound curve per (metric, space) group, log-scale ordinate.  Output
// bytes depend only on the input rows (the wall_ms column is ignored).
void plot_csv(const std::string& csv_path, const std::string& kind,
              const std::string& svg_path);

// Concave log-like comparison function: the chords of log(1+t) through the
// breakpoints t = 2^i - 1, i = 0..levels.
PsiFunction log_like_psi(int levels = 64);

}  // namespace kdiag
