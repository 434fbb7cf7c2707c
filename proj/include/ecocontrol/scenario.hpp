#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecocontrol/objective.hpp"

namespace ecocontrol {

/// Error in a scenario file or scenario settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to run one scenario.
struct ScenarioConfig {
  int case_id = 0;
  ModelParams params;
  int nx = 64;
  int ny = 64;
  Rectangle bounds;
  RegionShape region;
  OptimizerOptions optimizer;
  std::filesystem::path output_dir = "run";
  std::vector<double> snapshot_times;  // empty means {0, T/2, T}
  bool images = true;
  int pixel_block = 4;
  /// Non-fatal adjustments made while assembling the config.
  std::vector<std::string> warnings;

  /// Snapshot times with the default filled in.
  [[nodiscard]] std::vector<double> resolved_snapshot_times() const {
    if (!snapshot_times.empty()) return snapshot_times;
    const int half = params.steps() / 2;
    return {0.0, half * params.dt, params.T};
  }

  /// Time level of t; throws ConfigError when t is not a stored level.
  [[nodiscard]] int level_of(double t) const {
    const double ratio = t / params.dt;
    const auto n = static_cast<long>(std::lround(ratio));
    if (!(t >= 0) || t > params.T * (1 + 1e-12) || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio))
      throw ConfigError("snapshot time " + std::to_string(t) + " is not a multiple of dt in [0, T]");
    return static_cast<int>(n);
  }

  void validate() {
    if (case_id < 0 || case_id > 3) throw ConfigError("case must be one of 0, 1, 2, 3");
    try {
      params.validate();
      (void)Grid(nx, ny, bounds);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (optimizer.max_iter < 0) throw ConfigError("optimizer.max_iter must be >= 0");
    if (optimizer.eta_samples < 1) throw ConfigError("optimizer.eta_samples must be >= 1");
    if (!(optimizer.eps0 >= 0)) throw ConfigError("optimizer.eps0 must be >= 0");
    if (!(optimizer.tolerance >= 0)) throw ConfigError("optimizer.tol must be >= 0");
    if (pixel_block < 1) throw ConfigError("output.pixel_block must be >= 1");
    if (region.kind == RegionShape::Kind::disk && !(region.radius >= 0))
      throw ConfigError("region.radius must be >= 0");
    for (double t : snapshot_times) (void)level_of(t);
    if (case_id == 0 && optimizer.max_iter != 0) {
      optimizer.max_iter = 0;
      warnings.emplace_back("case 0 applies no control; max_iter forced to 0");
    }
    if (case_id == 0 && region.kind != RegionShape::Kind::none) {
      region = RegionShape::none();
      warnings.emplace_back("case 0 applies no control; region forced to none");
    }
  }
};

/// Reference scenarios. Cases 1 and 2 use declared disk geometries: a small
/// disk over the initial capital bump and a large centred disk.
inline ScenarioConfig preset(int case_id) {
  if (case_id < 0 || case_id > 3) throw ConfigError("unknown case id " + std::to_string(case_id));
  ScenarioConfig cfg;
  cfg.case_id = case_id;
  switch (case_id) {
    case 0:
      cfg.region = RegionShape::none();
      cfg.optimizer.max_iter = 0;
      break;
    case 1: cfg.region = RegionShape::disk({0.5, 0.5}, 0.25); break;
    case 2: cfg.region = RegionShape::disk({0.0, 0.0}, 0.75); break;
    case 3: cfg.region = RegionShape::whole(); break;
  }
  cfg.output_dir = "run_case" + std::to_string(case_id);
  return cfg;
}

/// k0 = 0.1 exp(-((x-0.5)^2 + (y-0.5)^2) / 0.1), p0 = exp(x + y).
inline std::pair<Field, Field> initial_fields(const Grid& grid) {
  Field k0 = Field::interpolate(grid, [](double x, double y) {
    return 0.1 * std::exp((-(x - 0.5) * (x - 0.5) - (y - 0.5) * (y - 0.5)) / 0.1);
  });
  Field p0 = Field::interpolate(grid, [](double x, double y) { return std::exp(x + y); });
  return {std::move(k0), std::move(p0)};
}

/// Starting controls: none for case 0; otherwise c = tau = (1 - s)/2 and
/// xi = L/2, with tau and xi restricted to omega.
inline ControlSet initial_controls(const ScenarioConfig& cfg, const Grid& grid, const RegionMask& mask) {
  const ModelParams& m = cfg.params;
  if (cfg.case_id == 0) return ControlSet::uniform(grid, m, mask, 0.0, 0.0, 0.0);
  const double half = 0.5 * m.consumption_budget();
  return ControlSet::uniform(grid, m, mask, half, half, 0.5 * m.L);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace detail

/// Parse a comma-separated list of reals.
inline std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = detail::trim(text.substr(0, comma));
    double v = 0;
    const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || r.ec != std::errc{} || r.ptr != item.data() + item.size())
      throw ConfigError("not a number: '" + std::string(item) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

/// Flat `key = value` view of a config, in the scenario-file key schema.
inline std::vector<std::pair<std::string, std::string>> to_key_values(const ScenarioConfig& c) {
  using detail::format_double;
  const ModelParams& m = c.params;
  std::vector<std::pair<std::string, std::string>> kv = {
      {"case", std::to_string(c.case_id)},
      {"model.d1", format_double(m.d1)},
      {"model.d2", format_double(m.d2)},
      {"model.delta1", format_double(m.delta1)},
      {"model.delta2", format_double(m.delta2)},
      {"model.A", format_double(m.A)},
      {"model.theta", format_double(m.theta)},
      {"model.alpha1", format_double(m.alpha1)},
      {"model.alpha2", format_double(m.alpha2)},
      {"model.gamma", format_double(m.gamma)},
      {"model.chi", format_double(m.chi)},
      {"model.phi", format_double(m.phi_const)},
      {"model.s", format_double(m.s)},
      {"model.L", format_double(m.L)},
      {"model.beta0", format_double(m.beta0)},
      {"model.beta1", format_double(m.beta1)},
      {"model.beta2", format_double(m.beta2)},
      {"model.T", format_double(m.T)},
      {"model.dt", format_double(m.dt)},
      {"grid.nx", std::to_string(c.nx)},
      {"grid.ny", std::to_string(c.ny)},
      {"grid.xmin", format_double(c.bounds.lo.x)},
      {"grid.xmax", format_double(c.bounds.hi.x)},
      {"grid.ymin", format_double(c.bounds.lo.y)},
      {"grid.ymax", format_double(c.bounds.hi.y)},
      {"region.shape", to_string(c.region.kind)},
  };
  if (c.region.kind == RegionShape::Kind::disk) {
    kv.emplace_back("region.cx", format_double(c.region.center.x));
    kv.emplace_back("region.cy", format_double(c.region.center.y));
    kv.emplace_back("region.radius", format_double(c.region.radius));
  }
  kv.emplace_back("optimizer.eps0", format_double(c.optimizer.eps0));
  kv.emplace_back("optimizer.eta_samples", std::to_string(c.optimizer.eta_samples));
  kv.emplace_back("optimizer.tol", format_double(c.optimizer.tolerance));
  kv.emplace_back("optimizer.max_iter", std::to_string(c.optimizer.max_iter));
  kv.emplace_back("output.dir", c.output_dir.string());
  kv.emplace_back("output.snapshots", detail::join_doubles(c.resolved_snapshot_times()));
  kv.emplace_back("output.images", c.images ? "true" : "false");
  kv.emplace_back("output.pixel_block", std::to_string(c.pixel_block));
  return kv;
}

/// Parse scenario text. Keys absent from the text keep the values of
/// preset(case); `case` comes from the text or from `fallback_case`.
/// Unknown or repeated keys, bad values, and violated invariants raise
/// ConfigError naming the key and line.
inline ScenarioConfig parse_config_text(std::string_view text, std::optional<int> fallback_case = {}) {
  struct Entry {
    std::string value;
    int line;
  };
  std::map<std::string, Entry, std::less<>> entries;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (entries.count(key))
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    entries.emplace(key, Entry{value, line_no});
  }

  auto where = [](const std::string& key, const Entry& e) {
    return "key '" + key + "' (line " + std::to_string(e.line) + ")";
  };
  auto as_double = [&](const std::string& key, const Entry& e) {
    double v = 0;
    const auto r = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (e.value.empty() || r.ec != std::errc{} || r.ptr != e.value.data() + e.value.size())
      throw ConfigError(where(key, e) + ": not a number: '" + e.value + "'");
    return v;
  };
  auto as_int = [&](const std::string& key, const Entry& e) {
    int v = 0;
    const auto r = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (e.value.empty() || r.ec != std::errc{} || r.ptr != e.value.data() + e.value.size())
      throw ConfigError(where(key, e) + ": not an integer: '" + e.value + "'");
    return v;
  };
  auto as_bool = [&](const std::string& key, const Entry& e) {
    if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no") return false;
    throw ConfigError(where(key, e) + ": not a boolean: '" + e.value + "'");
  };

  int case_id = 0;
  if (const auto it = entries.find("case"); it != entries.end()) {
    case_id = as_int(it->first, it->second);
    if (case_id < 0 || case_id > 3) throw ConfigError(where(it->first, it->second) + ": unknown case id");
  } else if (fallback_case) {
    case_id = *fallback_case;
  } else {
    throw ConfigError("missing key 'case' and no fallback case given");
  }
  ScenarioConfig cfg = preset(case_id);

  std::map<std::string, double*, std::less<>> reals = {
      {"model.d1", &cfg.params.d1},         {"model.d2", &cfg.params.d2},
      {"model.delta1", &cfg.params.delta1}, {"model.delta2", &cfg.params.delta2},
      {"model.A", &cfg.params.A},           {"model.theta", &cfg.params.theta},
      {"model.alpha1", &cfg.params.alpha1}, {"model.alpha2", &cfg.params.alpha2},
      {"model.gamma", &cfg.params.gamma},   {"model.chi", &cfg.params.chi},
      {"model.phi", &cfg.params.phi_const}, {"model.s", &cfg.params.s},
      {"model.L", &cfg.params.L},           {"model.beta0", &cfg.params.beta0},
      {"model.beta1", &cfg.params.beta1},   {"model.beta2", &cfg.params.beta2},
      {"model.T", &cfg.params.T},           {"model.dt", &cfg.params.dt},
      {"grid.xmin", &cfg.bounds.lo.x},      {"grid.xmax", &cfg.bounds.hi.x},
      {"grid.ymin", &cfg.bounds.lo.y},      {"grid.ymax", &cfg.bounds.hi.y},
      {"region.cx", &cfg.region.center.x},  {"region.cy", &cfg.region.center.y},
      {"region.radius", &cfg.region.radius}, {"optimizer.eps0", &cfg.optimizer.eps0},
      {"optimizer.tol", &cfg.optimizer.tolerance},
  };
  std::map<std::string, int*, std::less<>> ints = {
      {"grid.nx", &cfg.nx},
      {"grid.ny", &cfg.ny},
      {"optimizer.eta_samples", &cfg.optimizer.eta_samples},
      {"optimizer.max_iter", &cfg.optimizer.max_iter},
      {"output.pixel_block", &cfg.pixel_block},
  };

  // The shape is applied first so explicit disk parameters override preset ones.
  if (const auto it = entries.find("region.shape"); it != entries.end()) {
    const std::string& v = it->second.value;
    if (v == "none") cfg.region = RegionShape::none();
    else if (v == "whole") cfg.region = RegionShape::whole();
    else if (v == "disk") {
      if (cfg.region.kind != RegionShape::Kind::disk) cfg.region = RegionShape::disk({0.0, 0.0}, 0.0);
    } else {
      throw ConfigError(where(it->first, it->second) + ": shape must be none, disk, or whole");
    }
  }
  for (const auto& [key, e] : entries) {
    if (key == "case" || key == "region.shape") continue;
    if (const auto r = reals.find(key); r != reals.end()) {
      *r->second = as_double(key, e);
    } else if (const auto i = ints.find(key); i != ints.end()) {
      *i->second = as_int(key, e);
    } else if (key == "output.dir") {
      cfg.output_dir = e.value;
    } else if (key == "output.snapshots") {
      try {
        cfg.snapshot_times = parse_double_list(e.value);
      } catch (const ConfigError& err) {
        throw ConfigError(where(key, e) + ": " + err.what());
      }
    } else if (key == "output.images") {
      cfg.images = as_bool(key, e);
    } else {
      throw ConfigError(where(key, e) + ": unknown key");
    }
  }
  if ((entries.count("region.cx") || entries.count("region.cy") || entries.count("region.radius")) &&
      cfg.region.kind != RegionShape::Kind::disk)
    throw ConfigError("region.cx/cy/radius require region.shape = disk");

  // Invariants whose violation is attributable to one key.
  const ModelParams& m = cfg.params;
  if (m.dt > 0 && m.T > 0) {
    const double ratio = m.T / m.dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) {
      const auto it = entries.count("model.dt") ? entries.find("model.dt") : entries.find("model.T");
      const std::string prefix = it != entries.end() ? where(it->first, it->second) + ": " : "";
      throw ConfigError(prefix + "T = " + detail::format_double(m.T) +
                        " is not an integer multiple of dt = " + detail::format_double(m.dt));
    }
  }
  if (const auto it = entries.find("output.snapshots"); it != entries.end()) {
    try {
      for (double t : cfg.snapshot_times) (void)cfg.level_of(t);
    } catch (const ConfigError& err) {
      throw ConfigError(where(it->first, it->second) + ": " + err.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline ScenarioConfig parse_config(const std::filesystem::path& path, std::optional<int> fallback_case = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str(), fallback_case);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Outcome of one scenario run.
struct ScenarioRun {
  ScenarioConfig config;
  Grid grid;
  RegionMask mask;
  OptimizationResult result;
};

inline ScenarioRun run_scenario(ScenarioConfig cfg, const IterationCallback& on_iteration = {}) {
  cfg.validate();
  Grid grid(cfg.nx, cfg.ny, cfg.bounds);
  RegionMask mask(grid, cfg.region);
  if (cfg.case_id != 0 && mask.empty())
    throw ConfigError("control region contains no grid node");
  const Discretization disc(grid, cfg.params);
  const auto [k0, p0] = initial_fields(grid);
  ControlSet u0 = initial_controls(cfg, grid, mask);
  OptimizationResult res = optimize(disc, std::move(u0), k0, p0, cfg.optimizer, on_iteration);
  return {std::move(cfg), std::move(grid), std::move(mask), std::move(res)};
}

}  // namespace ecocontrol
