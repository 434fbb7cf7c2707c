#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecocontrol/io.hpp"
#include "ecocontrol/scenario.hpp"

namespace ecocontrol {

/// Command-line overrides; unset fields leave the scenario untouched.
struct CliOptions {
  std::optional<int> case_id;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<int> grid;
  std::optional<double> dt;
  std::optional<int> max_iter;
  std::optional<double> eps0;
  std::optional<int> eta_samples;
  std::optional<double> tol;
  std::optional<std::string> snapshots;
  bool no_images = false;
  bool quiet = false;
};

/// Merge a config file, --case, and explicit flags. A case named in the
/// config file wins over --case (recorded as a warning); every other flag
/// overrides the file.
inline ScenarioConfig resolve_config(const CliOptions& o) {
  ScenarioConfig cfg;
  if (o.config) {
    cfg = parse_config(*o.config, o.case_id);
    if (o.case_id && *o.case_id != cfg.case_id)
      cfg.warnings.push_back("--case " + std::to_string(*o.case_id) + " ignored; config file selects case " +
                             std::to_string(cfg.case_id));
  } else if (o.case_id) {
    cfg = preset(*o.case_id);
  } else {
    throw ConfigError("no scenario selected: pass --case or --config");
  }
  if (o.out) cfg.output_dir = *o.out;
  if (o.grid) cfg.nx = cfg.ny = *o.grid;
  if (o.dt) cfg.params.dt = *o.dt;
  if (o.max_iter) cfg.optimizer.max_iter = *o.max_iter;
  if (o.eps0) cfg.optimizer.eps0 = *o.eps0;
  if (o.eta_samples) cfg.optimizer.eta_samples = *o.eta_samples;
  if (o.tol) cfg.optimizer.tolerance = *o.tol;
  if (o.snapshots) cfg.snapshot_times = parse_double_list(*o.snapshots);
  if (o.no_images) cfg.images = false;
  cfg.validate();
  return cfg;
}

/// Run a resolved scenario and write every output file. Returns the manifest path.
inline std::filesystem::path execute_scenario(ScenarioConfig cfg, std::ostream& log) {
  namespace fs = std::filesystem;
  cfg.validate();
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  RunLock lock(dir);

  const auto start = std::chrono::steady_clock::now();
  ScenarioRun run = run_scenario(cfg, [&log](int iter, const ObjectiveBreakdown& o, double eta) {
    log << "iter " << iter << "  I = " << detail::g17(o.total);
    if (iter > 0) log << "  eta0 = " << eta;
    log << '\n';
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const OptimizationResult& res = run.result;

  std::vector<fs::path> written;
  auto emit = [&](const Field& f, const std::string& name, double t) {
    written.push_back(export_snapshot(run.grid, f, name, t, dir));
    if (cfg.images) {
      for (auto& p : render_heatmap(run.grid, f, dir / snapshot_name(name, t, ".ppm"), cfg.pixel_block))
        written.push_back(std::move(p));
    }
  };
  for (double t : cfg.resolved_snapshot_times()) {
    const auto n = static_cast<std::size_t>(cfg.level_of(t));
    emit(res.state.k[n], "k", t);
    emit(res.state.p[n], "p", t);
    if (cfg.case_id != 0) {
      emit(res.controls.c[n], "c", t);
      emit(res.controls.tau[n], "tau", t);
      emit(res.controls.xi[n], "xi", t);
    }
  }
  written.push_back(write_convergence_log(res, dir));

  Manifest mf;
  for (const auto& [k, v] : to_key_values(cfg)) mf.set("config." + k, v);
  mf.set("grid.nodes", std::to_string(run.grid.node_count()));
  mf.set("linear_system.unknowns", std::to_string(2 * run.grid.node_count()));
  mf.set("region.nodes", std::to_string(run.mask.count()));
  mf.add_objective("objective.start", res.objective_history.front());
  mf.add_objective("objective.end", res.objective);
  mf.add_objective("objective.best", res.best_objective);
  mf.set("stop_reason", to_string(res.stop_reason));
  mf.set("iterations", std::to_string(res.iterations));
  mf.set("positivity.min_state", res.min_state_value);
  mf.set("positivity.ok", res.min_state_value >= -1e-8 ? "true" : "false");
  mf.set("wall_clock_seconds", seconds);
  for (std::size_t i = 0; i < cfg.warnings.size(); ++i) mf.set("warning." + std::to_string(i), cfg.warnings[i]);
  mf.add_inventory(written);
  const fs::path manifest = dir / "manifest.txt";
  mf.write(manifest);
  return manifest;
}

/// Entry point of the `ecocontrol` tool. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Optimal consumption, green taxation, and abatement for a spatial capital-pollution model"};
  app.name("ecocontrol");
  CliOptions o;
  app.add_option("--case", o.case_id, "Scenario preset")->check(CLI::Range(0, 3));
  app.add_option("--config", o.config, "Scenario file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--grid", o.grid, "Elements per axis")->check(CLI::PositiveNumber);
  app.add_option("--dt", o.dt, "Time step")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", o.max_iter, "Maximum ascent iterations")->check(CLI::NonNegativeNumber);
  app.add_option("--eps0", o.eps0, "Ascent step size")->check(CLI::NonNegativeNumber);
  app.add_option("--eta-samples", o.eta_samples, "Line-search intervals")->check(CLI::PositiveNumber);
  app.add_option("--tol", o.tol, "Stopping tolerance on the objective improvement")->check(CLI::NonNegativeNumber);
  app.add_option("--snapshots", o.snapshots, "Comma-separated output times");
  app.add_flag("--no-images", o.no_images, "Skip heatmap images");
  app.add_flag("-q,--quiet", o.quiet, "Suppress per-iteration progress");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    const ScenarioConfig cfg = resolve_config(o);
    std::ostringstream sink;
    std::ostream& log = o.quiet ? static_cast<std::ostream&>(sink) : out;
    const auto manifest = execute_scenario(cfg, log);
    out << "wrote " << manifest.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "ecocontrol: " << e.what() << '\n';
    return 1;
  }
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("ecocontrol");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace ecocontrol
