#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "ecocontrol/cli.hpp"
#include "ecocontrol/ecocontrol.hpp"

using namespace ecocontrol;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ecocontrol_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> csv_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::map<std::string, std::string> manifest_map(const fs::path& p) {
  std::map<std::string, std::string> m;
  for (auto& [k, v] : Manifest::parse(p)) m[k] = v;
  return m;
}

std::vector<double> split_doubles(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell.empty() ? NAN : std::stod(cell));
  if (!line.empty() && line.back() == ',') out.push_back(NAN);
  return out;
}

}  // namespace

TEST(Preset, ReferenceParameters) {
  for (int c = 0; c <= 3; ++c) {
    ScenarioConfig cfg = preset(c);
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.params.s, 0.6);
    EXPECT_EQ(cfg.params.L, 0.5);
    EXPECT_EQ(cfg.params.T, 5.0);
    EXPECT_EQ(cfg.params.dt, 0.05);
    EXPECT_EQ(cfg.params.theta, 2.0);
    EXPECT_EQ(cfg.params.gamma, 4.0);
    EXPECT_EQ(cfg.params.phi_const, 0.3);
    EXPECT_EQ(cfg.nx, 64);
    EXPECT_EQ(cfg.ny, 64);
    EXPECT_TRUE(cfg.warnings.empty());
  }
  EXPECT_THROW(preset(4), ConfigError);
}

TEST(Preset, Regions) {
  const Grid g = build_grid(64, 64);
  EXPECT_EQ(RegionMask(g, preset(3).region).count(), g.node_count());
  EXPECT_EQ(RegionMask(g, preset(0).region).count(), 0u);
  const std::size_t small = RegionMask(g, preset(1).region).count();
  const std::size_t big = RegionMask(g, preset(2).region).count();
  EXPECT_GT(small, 0u);
  EXPECT_GT(big, small);
  EXPECT_LT(big, g.node_count());
}

TEST(Preset, UncontrolledCaseHasZeroControlsAndNoIterations) {
  const ScenarioConfig cfg = preset(0);
  EXPECT_EQ(cfg.optimizer.max_iter, 0);
  const Grid g = build_grid(4, 4);
  const RegionMask mask(g, cfg.region);
  const ControlSet u = initial_controls(cfg, g, mask);
  for (const auto* t : {&u.c, &u.tau, &u.xi})
    for (const auto& f : t->levels)
      for (double v : f) EXPECT_EQ(v, 0.0);
}

TEST(InitialFields, PointValues) {
  const Grid g = build_grid(4, 4);
  const auto [k0, p0] = initial_fields(g);
  EXPECT_NEAR(k0[g.node_index(3, 3)], 0.1, 1e-15);
  EXPECT_NEAR(p0[g.node_index(2, 2)], 1.0, 1e-15);
  EXPECT_NEAR(p0[g.node_index(4, 4)], 7.389056, 1e-6);
  EXPECT_GE(k0.min(), 0.0);
}

TEST(InitialControls, StrictlyInteriorOnRegion) {
  const ScenarioConfig cfg = preset(1);
  const Grid g = build_grid(16, 16);
  const RegionMask mask(g, cfg.region);
  const ControlSet u = initial_controls(cfg, g, mask);
  EXPECT_TRUE(u.feasible(cfg.params));
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    EXPECT_EQ(u.c[0][i], 0.2);
    EXPECT_EQ(u.tau[0][i], mask.contains(i) ? 0.2 : 0.0);
    EXPECT_EQ(u.xi[0][i], mask.contains(i) ? 0.25 : 0.0);
  }
}

TEST(ParseConfig, EmptyTextFallsBackToPreset) {
  const ScenarioConfig cfg = parse_config_text("", 2);
  EXPECT_EQ(to_key_values(cfg), to_key_values(preset(2)));
  const ScenarioConfig same = parse_config_text("case = 2\n# comment\n\n");
  EXPECT_EQ(to_key_values(same), to_key_values(preset(2)));
}

TEST(ParseConfig, RoundTripsEveryKey) {
  ScenarioConfig cfg = preset(1);
  cfg.nx = 20;
  cfg.ny = 24;
  cfg.params.delta2 = 0.0125;
  cfg.params.dt = 0.025;
  cfg.region = RegionShape::disk({0.1, -0.2}, 0.3);
  cfg.optimizer.eps0 = 0.07;
  cfg.snapshot_times = {0, 1.25, 5};
  cfg.images = false;
  std::string text;
  for (const auto& [k, v] : to_key_values(cfg)) text += k + " = " + v + "\n";
  EXPECT_EQ(to_key_values(parse_config_text(text)), to_key_values(cfg));
}

TEST(ParseConfig, RejectsStepNotDividingHorizon) {
  try {
    (void)parse_config_text("case = 1\nmodel.dt = 0.07\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.dt"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(ParseConfig, RejectsUnknownDuplicateAndMalformed) {
  auto message = [](const std::string& text) {
    try {
      (void)parse_config_text(text, 1);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("model.zeta = 1\n").find("model.zeta"), std::string::npos);
  EXPECT_NE(message("grid.nx = 8\ngrid.nx = 9\n").find("duplicate"), std::string::npos);
  EXPECT_NE(message("grid.nx = eight\n").find("grid.nx"), std::string::npos);
  EXPECT_NE(message("model.s = 1.5\n").find("s must"), std::string::npos);
  EXPECT_NE(message("just words\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("output.snapshots = 0, 0.33\n").find("output.snapshots"), std::string::npos);
  EXPECT_THROW(parse_config_text("grid.nx = 8\n"), ConfigError);
}

TEST(ParseConfig, UncontrolledCaseForcesNoIterations) {
  const ScenarioConfig cfg = parse_config_text("case = 0\noptimizer.max_iter = 7\n");
  EXPECT_EQ(cfg.optimizer.max_iter, 0);
  EXPECT_EQ(cfg.warnings.size(), 1u);
}

TEST(ParseConfig, ReadsFile) {
  const fs::path dir = scratch("parse");
  std::ofstream(dir / "s.cfg") << "case = 3\ngrid.nx = 64\ngrid.ny = 64\n";
  const ScenarioConfig cfg = parse_config(dir / "s.cfg");
  EXPECT_EQ(cfg.case_id, 3);
  EXPECT_EQ(build_grid(cfg.nx, cfg.ny).node_count(), 4225u);
  EXPECT_THROW(parse_config(dir / "missing.cfg"), ConfigError);
}

TEST(Snapshot, ConstantFieldOnSingleElement) {
  const fs::path dir = scratch("snap1");
  const Grid g = build_grid(1, 1);
  const fs::path p = export_snapshot(g, Field::constant(g, 1.0), "k", 0.0, dir);
  const auto lines = csv_lines(p);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "x,y,value");
  for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_EQ(split_doubles(lines[i])[2], 1.0);
  EXPECT_EQ(split_doubles(lines[1])[0], -1.0);
  EXPECT_EQ(split_doubles(lines[2])[0], 1.0);
}

TEST(Snapshot, RoundTripIsBitwise) {
  const fs::path dir = scratch("snap2");
  const Grid g = build_grid(64, 64);
  const Field f = Field::interpolate(g, [](double x, double y) { return std::exp(x) * std::sin(7 * y) / 3.0; });
  const fs::path p = export_snapshot(g, f, "p", 2.5, dir);
  EXPECT_EQ(p.filename(), "p_t2.5000.csv");
  EXPECT_EQ(csv_lines(p).size(), 4226u);
  const Field back = read_snapshot(p);
  ASSERT_EQ(back.size(), f.size());
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(back[i], f[i]);
}

namespace {

struct Ppm {
  int width = 0, height = 0;
  std::string pixels;
};

Ppm read_ppm(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string magic;
  int maxval = 0;
  Ppm img;
  in >> magic >> img.width >> img.height >> maxval;
  in.get();
  img.pixels.assign(std::istreambuf_iterator<char>(in), {});
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(maxval, 255);
  return img;
}

int intensity(const Ppm& img, int x, int y) {
  const std::size_t at = 3 * (static_cast<std::size_t>(y) * img.width + x);
  return static_cast<unsigned char>(img.pixels[at]) + static_cast<unsigned char>(img.pixels[at + 1]) +
         static_cast<unsigned char>(img.pixels[at + 2]);
}

}  // namespace

TEST(Heatmap, DimensionsAndSidecar) {
  const fs::path dir = scratch("heat1");
  const Grid g = build_grid(5, 3);
  const auto files = render_heatmap(g, Field::interpolate(g, [](double x, double y) { return x + y; }),
                                    dir / "f.ppm", 3);
  ASSERT_EQ(files.size(), 2u);
  const Ppm img = read_ppm(files[0]);
  EXPECT_EQ(img.width, 18);
  EXPECT_EQ(img.height, 12);
  EXPECT_EQ(img.pixels.size(), 18u * 12u * 3u);
  const std::string scale = slurp(files[1]);
  EXPECT_NE(scale.find("min = -2"), std::string::npos);
  EXPECT_NE(scale.find("max = 2"), std::string::npos);
}

TEST(Heatmap, ConstantFieldIsUniform) {
  const fs::path dir = scratch("heat2");
  const Grid g = build_grid(4, 4);
  const Ppm img = read_ppm(render_heatmap(g, Field::constant(g, 3.0), dir / "c.ppm", 2)[0]);
  for (std::size_t i = 3; i < img.pixels.size(); ++i) EXPECT_EQ(img.pixels[i], img.pixels[i % 3]);
}

TEST(Heatmap, IntensityIncreasesAlongRows) {
  const fs::path dir = scratch("heat3");
  const Grid g = build_grid(16, 4);
  const Ppm img = read_ppm(render_heatmap(g, Field::interpolate(g, [](double x, double) { return x; }),
                                          dir / "x.ppm", 1)[0]);
  for (int y = 0; y < img.height; ++y)
    for (int x = 1; x < img.width; ++x) EXPECT_GT(intensity(img, x, y), intensity(img, x - 1, y));
}

TEST(Heatmap, RejectsNonFiniteField) {
  const fs::path dir = scratch("heat4");
  const Grid g = build_grid(2, 2);
  Field f = Field::constant(g, 0.0);
  f[3] = NAN;
  EXPECT_THROW(render_heatmap(g, f, dir / "n.ppm"), std::invalid_argument);
}

TEST(ConvergenceLog, RowsMatchHistory) {
  const fs::path dir = scratch("log");
  ScenarioConfig cfg = preset(1);
  cfg.nx = cfg.ny = 12;
  cfg.optimizer.max_iter = 4;
  const ScenarioRun run = run_scenario(cfg);
  const auto lines = csv_lines(write_convergence_log(run.result, dir));
  ASSERT_EQ(lines.size(), run.result.objective_history.size() + 1);
  EXPECT_EQ(lines[0], "iter,I_total,t1,t2,t3,t4,eta0,improvement");
  double prev = -1e300;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto v = split_doubles(lines[r]);
    ASSERT_EQ(v.size(), 8u);
    EXPECT_NEAR(v[2] - v[3] - v[4] - v[5], v[1], 1e-9);
    EXPECT_GE(v[1], prev);
    if (r > 1) {
      EXPECT_NEAR(v[7], v[1] - prev, 1e-12);
    }
    prev = v[1];
  }
}

TEST(ConvergenceLog, SingleRowWithoutIterations) {
  const fs::path dir = scratch("log0");
  ScenarioConfig cfg = preset(0);
  cfg.nx = cfg.ny = 6;
  const auto lines = csv_lines(write_convergence_log(run_scenario(cfg).result, dir));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[1].substr(lines[1].size() - 2), ",,");
}

TEST(RunLock, SecondLockFails) {
  const fs::path dir = scratch("lock");
  {
    RunLock a(dir);
    EXPECT_TRUE(fs::exists(dir / ".run.lock"));
    EXPECT_THROW(RunLock b(dir), IoError);
  }
  EXPECT_FALSE(fs::exists(dir / ".run.lock"));
}

TEST(Cli, UncontrolledRunWritesExpectedFiles) {
  const fs::path dir = scratch("cli0");
  std::ostringstream out, err;
  ASSERT_EQ(run_cli({"--case", "0", "--grid", "16", "--snapshots", "0,2.5,5", "--no-images", "--out", dir.string()},
                    out, err),
            0)
      << err.str();
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  const std::vector<std::string> expected = {"convergence.csv", "k_t0.0000.csv", "k_t2.5000.csv",
                                             "k_t5.0000.csv",   "manifest.txt",  "p_t0.0000.csv",
                                             "p_t2.5000.csv",   "p_t5.0000.csv"};
  EXPECT_EQ(names, expected);
  const auto mf = manifest_map(dir / "manifest.txt");
  EXPECT_EQ(mf.at("grid.nodes"), "289");
  EXPECT_EQ(mf.at("stop_reason"), "maxiter");
  EXPECT_EQ(mf.at("positivity.ok"), "true");
  EXPECT_EQ(mf.at("files.count"), "7");
  for (int i = 0; i < 7; ++i) {
    const std::string key = "files." + std::to_string(i);
    const fs::path f = dir / mf.at(key + ".name");
    EXPECT_EQ(mf.at(key + ".bytes"), std::to_string(fs::file_size(f)));
    EXPECT_EQ(mf.at(key + ".fnv1a64"), hex64(file_checksum(f)));
  }
}

TEST(Cli, DefaultGridManifestReportsNodeCount) {
  const fs::path dir = scratch("cli64");
  std::ostringstream out, err;
  ASSERT_EQ(run_cli({"--case", "0", "--no-images", "-q", "--out", dir.string()}, out, err), 0) << err.str();
  const auto mf = manifest_map(dir / "manifest.txt");
  EXPECT_EQ(mf.at("grid.nodes"), "4225");
  EXPECT_EQ(mf.at("linear_system.unknowns"), "8450");
  EXPECT_EQ(csv_lines(dir / "k_t5.0000.csv").size(), 4226u);
}

TEST(Cli, WholeDomainWithoutIterations) {
  const fs::path dir = scratch("cli3");
  std::ostringstream out, err;
  ASSERT_EQ(run_cli({"--case", "3", "--grid", "8", "--max-iter", "0", "-q", "--out", dir.string()}, out, err), 0)
      << err.str();
  const auto mf = manifest_map(dir / "manifest.txt");
  EXPECT_EQ(mf.at("region.nodes"), "81");
  EXPECT_EQ(mf.at("iterations"), "0");
  EXPECT_EQ(mf.at("objective.start.total"), mf.at("objective.end.total"));
  EXPECT_EQ(csv_lines(dir / "convergence.csv").size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "xi_t5.0000.csv"));
  EXPECT_TRUE(fs::exists(dir / "tau_t2.5000.ppm"));
  EXPECT_TRUE(fs::exists(dir / "tau_t2.5000.ppm.scale.txt"));
}

TEST(Cli, OptimizingRunImprovesObjective) {
  const fs::path dir = scratch("cli2");
  std::ostringstream out, err;
  ASSERT_EQ(run_cli({"--case", "2", "--grid", "12", "--max-iter", "5", "--no-images", "--out", dir.string()}, out, err),
            0)
      << err.str();
  const auto mf = manifest_map(dir / "manifest.txt");
  EXPECT_GE(std::stod(mf.at("objective.end.total")), std::stod(mf.at("objective.start.total")));
  EXPECT_NE(out.str().find("iter 0"), std::string::npos);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  std::ostringstream out, err;
  for (const auto& dir : {a, b})
    ASSERT_EQ(run_cli({"--case", "1", "--grid", "12", "--max-iter", "3", "-q", "--out", dir.string()}, out, err), 0)
        << err.str();
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const std::string name = e.path().filename().string();
    if (name == "manifest.txt") continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / name)) << name;
    ++compared;
  }
  EXPECT_GT(compared, 10u);
}

TEST(Cli, ConfigCaseWinsOverFlagWithWarning) {
  const fs::path dir = scratch("cliconf");
  std::ofstream(dir / "s.cfg") << "case = 0\ngrid.nx = 6\ngrid.ny = 6\n";
  std::ostringstream out, err;
  ASSERT_EQ(run_cli({"--config", (dir / "s.cfg").string(), "--case", "2", "-q", "--no-images", "--out",
                     (dir / "run").string()},
                    out, err),
            0)
      << err.str();
  const auto mf = manifest_map(dir / "run" / "manifest.txt");
  EXPECT_EQ(mf.at("config.case"), "0");
  EXPECT_NE(mf.at("warning.0").find("--case 2 ignored"), std::string::npos);
}

TEST(Cli, Failures) {
  std::ostringstream out, err;
  EXPECT_NE(run_cli(std::vector<std::string>{}, out, err), 0);
  EXPECT_NE(run_cli({"--case", "7"}, out, err), 0);
  EXPECT_NE(run_cli({"--case", "1", "--dt", "0.07", "--out", scratch("bad").string()}, out, err), 0);
  EXPECT_NE(err.str().find("multiple of dt"), std::string::npos) << err.str();
  const fs::path locked = scratch("locked");
  RunLock hold(locked);
  EXPECT_NE(run_cli({"--case", "0", "--grid", "4", "--out", locked.string()}, out, err), 0);
  EXPECT_NE(err.str().find("locked"), std::string::npos);
}
