// pos-sde: run a benchmark scenario and write CSV, or summarize a CSV file.
//
//   pos-sde <scenario> [--config file.json] [overrides...]
//   pos-sde summary <file.csv>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pos/bench.hpp"
#include "pos/error.hpp"
#include "pos/kernels.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericExit = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pos::ConfigError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel optimized sampling benchmarks"};
  app.set_help_flag("-h,--help", "Show help");

  std::string scenario, csv_path, config_path, method, kernels = "auto", special;
  std::vector<std::size_t> n_samples;
  std::vector<double> dt, laser_b;
  std::size_t n_steps = 0, attempts = 0, workers = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  int M = 0;
  std::string out;
  bool no_timing = false, degree4 = false;

  app.add_option("scenario", scenario,
                 "static | onestep-combined | onestep-individual | sde-ou | sde-cubic | sde-irregular | "
                 "sde-laser | plan | summary")
      ->required();
  app.add_option("csv", csv_path, "CSV file (summary only)");
  app.add_option("--config", config_path, "JSON file with flat RunConfig keys");
  auto* o_n = app.add_option("--n-samples", n_samples, "ensemble size(s) N_S");
  auto* o_nt = app.add_option("--n-steps", n_steps, "time steps N_T");
  auto* o_dt = app.add_option("--dt", dt, "step size(s)");
  auto* o_T = app.add_option("--horizon", horizon, "end time T");
  auto* o_a = app.add_option("--attempts", attempts, "attempts or paired runs");
  auto* o_m = app.add_option("--method", method, "euler | combined | individual");
  auto* o_s = app.add_option("--seed", seed, "RNG seed");
  auto* o_M = app.add_option("--M", M, "number of optimized moments");
  auto* o_b = app.add_option("--laser-b", laser_b, "laser noise amplitudes");
  auto* o_w = app.add_option("--workers", workers, "worker threads");
  auto* o_sp = app.add_option("--special", special, "divide_sqrt_n | multiply_sqrt_n");
  app.add_option("--out", out, "output CSV path (default stdout)");
  app.add_option("--kernels", kernels, "auto | scalar | avx2");
  app.add_flag("--no-timing", no_timing, "write zero wall times (byte-identical output)");
  app.add_flag("--laser-degree4", degree4, "optimize only the degree <= 4 laser moments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigExit;
  }

  try {
    pos::kernels::select(kernels);
    if (scenario == "summary") {
      if (csv_path.empty()) throw pos::ConfigError("summary needs a CSV file");
      std::cout << pos::bench::emit_summary(read_file(csv_path));
      return 0;
    }
    if (!csv_path.empty()) throw pos::ConfigError("unexpected argument '" + csv_path + "'");

    pos::bench::RunConfig cfg = pos::bench::default_config(pos::bench::scenario_from_string(scenario));
    if (!config_path.empty()) {
      pos::bench::apply_json(cfg, read_file(config_path));
      if (cfg.scenario != pos::bench::scenario_from_string(scenario))
        throw pos::ConfigError("config file names a different scenario");
    }
    if (*o_n) cfg.n_samples = n_samples;
    if (*o_nt) cfg.n_steps = n_steps;
    if (*o_dt) {
      cfg.dt = dt;
      if (!*o_T) cfg.horizon.reset();
    }
    if (*o_T) {
      cfg.horizon = horizon;
      if (!*o_dt) cfg.dt.clear();
    }
    if (*o_a) cfg.attempts = attempts;
    if (*o_m) {
      try {
        cfg.method = pos::method_from_string(method);
      } catch (const pos::InvalidInput& e) {
        throw pos::ConfigError(e.what());
      }
    }
    if (*o_s) cfg.seed = seed;
    if (*o_M) cfg.M = M;
    if (*o_b) cfg.laser_b = laser_b;
    if (*o_w) cfg.workers = workers;
    if (*o_sp) pos::bench::apply_json(cfg, "{\"special\": \"" + special + "\"}");
    if (!out.empty()) cfg.out = out;
    if (no_timing) cfg.timing = false;
    if (degree4) cfg.laser_degree4 = true;

    const auto rows = pos::bench::run(cfg);
    if (cfg.out.empty()) {
      pos::bench::write_csv(std::cout, rows);
    } else {
      std::ofstream f(cfg.out, std::ios::binary);
      if (!f) throw pos::ConfigError("cannot write '" + cfg.out + "'");
      pos::bench::write_csv(f, rows);
    }
    return 0;
  } catch (const pos::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const pos::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const pos::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfigExit;
  } catch (const pos::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
