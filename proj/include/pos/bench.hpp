#pragma once
// Benchmark harness: run configuration, the scenario runners, CSV emission
// and parsing, and the summary table.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "pos/dynamic_pos.hpp"
#include "pos/stats.hpp"

namespace pos::bench {

enum class Scenario {
  static_opt,
  onestep_combined,
  onestep_individual,
  sde_ou,
  sde_cubic,
  sde_irregular,
  sde_laser,
  plan
};

const char* to_string(Scenario s) noexcept;
/// Throws ConfigError.
Scenario scenario_from_string(std::string_view s);

struct RunConfig {
  Scenario scenario = Scenario::static_opt;
  /// One entry per ensemble size; more than one makes an N_S sweep.
  std::vector<std::size_t> n_samples{1000};
  /// SDE scenarios: number of steps N_T.
  std::size_t n_steps = 1;
  /// One-step scenarios: list of step sizes. SDE scenarios: at most one
  /// entry, and then horizon must be unset (T = dt N_T).
  std::vector<double> dt;
  std::optional<double> horizon;
  /// Attempts (static, one-step) or independent paired runs (SDE).
  std::size_t attempts = 100;
  /// Number of optimized moments (1-D scenarios).
  int M = 6;
  /// Highest moment order reported.
  int report_moments = 8;
  /// Laser: optimize only the 14 moments of degree <= 4.
  bool laser_degree4 = false;
  Method method = Method::combined;
  std::uint64_t seed = 1;
  std::string out;
  std::size_t workers = 1;
  /// Record wall-clock times (the only non-deterministic CSV columns).
  bool timing = true;
  SpecialScaling special = SpecialScaling::divide_sqrt_n;

  /// static: target N(0, sigma^2)
  double sigma = 1.0;
  /// one-step: constant drift and noise; initial N(init_mean, init_std^2)
  double drift = 0.5;
  double noise = 0.5;
  double init_mean = 1.0;
  double init_std = 0.1;
  /// sde-ou
  double ou_f = 1.0, ou_g = 0.2, ou_b = 0.5;
  /// sde-laser noise amplitudes
  std::vector<double> laser_b{0.01, 0.32, 10.24};
  /// SDE scenarios: optimize the initial ensemble before integrating.
  bool optimize_initial = true;
  /// plan
  double plan_p = 1.0, plan_c = 1.0, plan_sigma = 1.0;
  std::uint64_t plan_budget = 1000000;

  /// T for the SDE scenarios.
  double horizon_value() const;
  /// Throws ConfigError.
  void validate() const;
};

/// Desk-scale defaults for a scenario.
RunConfig default_config(Scenario s);

/// Overlay flat JSON keys (same names as the RunConfig fields) onto cfg.
/// Unknown keys and wrong types throw ConfigError.
void apply_json(RunConfig& cfg, std::string_view json_text);

inline constexpr int kSchemaVersion = 1;

/// One CSV line: one (attempt, observable) pair.
///
/// static:      value = R_m optimized, reference = R_m of the same draw unoptimized
/// onestep-*:   value = R_m after the step, reference = R_m of the plain Euler step
/// sde-*:       value = |POS - exact|, reference = |Euler - exact| (paired noise)
/// plan:        value = planned quantity named by observable
/// iterations and distance are per attempt (per-step means for SDE runs).
struct CsvRecord {
  int schema = kSchemaVersion;
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  std::size_t n_steps = 0;
  double dt = 0.0;
  double param = 0.0;
  std::size_t attempt = 0;
  int m = 0;
  std::string observable;
  double value = 0.0;
  double reference = 0.0;
  double iterations = 0.0;
  double distance = 0.0;
  double wall_seconds = 0.0;
  double cost = 0.0;
  std::string status;

  friend bool operator==(const CsvRecord&, const CsvRecord&) = default;
};

std::string csv_header();
void write_csv(std::ostream& os, const std::vector<CsvRecord>& rows);
std::string to_csv(const std::vector<CsvRecord>& rows);
/// Throws ParseError with the 1-based line number.
std::vector<CsvRecord> parse_csv(std::string_view text);

std::vector<CsvRecord> run_static_bench(const RunConfig& cfg);
std::vector<CsvRecord> run_onestep_bench(const RunConfig& cfg);
std::vector<CsvRecord> run_sde_bench(const RunConfig& cfg);
std::vector<CsvRecord> run_plan(const RunConfig& cfg);
/// Validates and dispatches on cfg.scenario.
std::vector<CsvRecord> run(const RunConfig& cfg);

/// Run fn(0..count-1) on up to `workers` threads. The first exception thrown
/// is rethrown after all workers have stopped.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct SummaryRow {
  std::string scenario, method, observable;
  std::size_t n_samples = 0, n_steps = 0;
  double dt = 0.0, param = 0.0;
  int m = 0;
  std::size_t count = 0;
  std::size_t failures = 0;
  double mean_value = 0.0, mean_reference = 0.0;
  double gm_value = 0.0, gm_reference = 0.0;
  /// entries excluded from the geometric means for being exactly zero
  std::size_t zeros = 0;
  double median = 0.0, p10 = 0.0, p90 = 0.0;
  double mean_iterations = 0.0, mean_distance = 0.0;
};

struct SlopeRow {
  std::string scenario, method;
  /// "distance~n_samples", "distance~dt" or "value~n_samples:<observable>"
  std::string what;
  /// the other key held fixed (dt for N_S fits, N_S for dt fits)
  double fixed = 0.0;
  double param = 0.0;
  LineFit fit;
};

struct Summary {
  std::vector<SummaryRow> groups;
  std::vector<SlopeRow> fits;
};

/// Throws InvalidInput for an empty record set.
Summary summarize(const std::vector<CsvRecord>& rows);
std::string format_summary(const Summary& s);
/// parse_csv + summarize + format_summary
std::string emit_summary(std::string_view csv);

}  // namespace pos::bench
