#pragma once

#include <algorithm>
#include <array>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ecocontrol/objective.hpp"

namespace ecocontrol {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

/// File name for a field at time t, e.g. "k_t2.5000.csv".
inline std::string snapshot_name(const std::string& name, double t, const std::string& ext = ".csv") {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_t%.4f%s", name.c_str(), t, ext.c_str());
  return buf;
}

/// CSV with header `x,y,value`, one row per node in row-major order,
/// 17 significant digits so values round-trip exactly.
inline std::filesystem::path export_snapshot(const Grid& grid, const Field& field, const std::string& name,
                                             double t, const std::filesystem::path& dir) {
  require_on_grid(grid, field, "export_snapshot");
  std::string out = "x,y,value\n";
  out.reserve(field.size() * 64);
  for (std::size_t i = 0; i < field.size(); ++i) {
    const Point p = grid.node(i);
    out += detail::g17(p.x);
    out += ',';
    out += detail::g17(p.y);
    out += ',';
    out += detail::g17(field[i]);
    out += '\n';
  }
  const auto path = dir / snapshot_name(name, t);
  detail::write_file(path, out);
  return path;
}

/// Reads the value column of a snapshot CSV.
inline Field read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "x,y,value") throw IoError(path.string() + ": missing header");
  std::vector<double> values;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw IoError(path.string() + ": malformed row " + std::to_string(row));
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(line.c_str() + comma + 1, &end);
    if (errno != 0 || end == line.c_str() + comma + 1)
      throw IoError(path.string() + ": bad value on row " + std::to_string(row));
    values.push_back(v);
  }
  return Field(std::move(values));
}

/// Linear "hot" colour map; r + g + b grows linearly with s in [0, 1].
inline std::array<std::uint8_t, 3> hot_color(double s) {
  s = std::clamp(s, 0.0, 1.0);
  auto channel = [](double v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  };
  return {channel(3.0 * s), channel(3.0 * s - 1.0), channel(3.0 * s - 2.0)};
}

struct ColorScale {
  double min = 0.0;
  double max = 0.0;
};

/// Binary PPM heatmap, one block x block square per node, north up. The
/// scale goes to a sidecar `<path>.scale.txt`. A degenerate scale gives a
/// uniform image.
inline std::vector<std::filesystem::path> render_heatmap(const Grid& grid, const Field& field,
                                                         const std::filesystem::path& path, int block = 4,
                                                         std::optional<ColorScale> scale = {}) {
  require_on_grid(grid, field, "render_heatmap");
  if (!field.all_finite()) throw std::invalid_argument("render_heatmap: field must be finite");
  if (block < 1) throw std::invalid_argument("render_heatmap: block size must be >= 1");
  const ColorScale sc = scale ? *scale : ColorScale{field.min(), field.max()};
  const auto cols = static_cast<std::size_t>(grid.nx() + 1);
  const auto rows = static_cast<std::size_t>(grid.ny() + 1);
  const auto b = static_cast<std::size_t>(block);
  const std::size_t width = cols * b, height = rows * b;

  std::string img = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t header = img.size();
  img.resize(header + width * height * 3);
  const double span = sc.max - sc.min;
  for (std::size_t py = 0; py < height; ++py) {
    const std::size_t j = rows - 1 - py / b;
    for (std::size_t px = 0; px < width; ++px) {
      const std::size_t i = px / b;
      const double v = field[grid.node_index(static_cast<int>(i), static_cast<int>(j))];
      const double s = span > 0 ? (v - sc.min) / span : 0.5;
      const auto rgb = hot_color(s);
      const std::size_t at = header + 3 * (py * width + px);
      for (int c = 0; c < 3; ++c) img[at + static_cast<std::size_t>(c)] = static_cast<char>(rgb[static_cast<std::size_t>(c)]);
    }
  }
  detail::write_file(path, img);
  auto sidecar = path;
  sidecar += ".scale.txt";
  detail::write_file(sidecar, "colormap = hot\nmin = " + detail::g17(sc.min) + "\nmax = " + detail::g17(sc.max) +
                                  "\nwidth = " + std::to_string(width) + "\nheight = " + std::to_string(height) +
                                  "\nblock = " + std::to_string(block) + "\n");
  return {path, sidecar};
}

/// CSV `iter,I_total,t1,t2,t3,t4,eta0,improvement`; the first row leaves
/// eta0 and improvement empty.
inline std::filesystem::path write_convergence_log(const OptimizationResult& r, const std::filesystem::path& dir,
                                                   const std::string& file_name = "convergence.csv") {
  std::string out = "iter,I_total,t1,t2,t3,t4,eta0,improvement\n";
  for (std::size_t j = 0; j < r.objective_history.size(); ++j) {
    const auto& o = r.objective_history[j];
    out += std::to_string(j) + ',' + detail::g17(o.total) + ',' + detail::g17(o.t1_consumption) + ',' +
           detail::g17(o.t2_pollution) + ',' + detail::g17(o.t3_taxation) + ',' + detail::g17(o.t4_abatement) + ',';
    if (j > 0) {
      out += detail::g17(r.eta_history[j - 1]) + ',' + detail::g17(o.total - r.objective_history[j - 1].total);
    } else {
      out += ',';
    }
    out += '\n';
  }
  const auto path = dir / file_name;
  detail::write_file(path, out);
  return path;
}

/// 64-bit FNV-1a of a file's bytes.
inline std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<std::uint8_t>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Exclusive `.run.lock` in an output directory, released on destruction.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir) : path_(dir / ".run.lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      if (std::filesystem::exists(path_))
        throw IoError("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
      throw IoError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
    }
    std::fclose(f);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

 private:
  std::filesystem::path path_;
};

/// Key-value manifest entries (same schema family as scenario files).
class Manifest {
 public:
  void set(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }
  void set(std::string key, double value) { set(std::move(key), detail::g17(value)); }

  void add_objective(const std::string& prefix, const ObjectiveBreakdown& o) {
    set(prefix + ".total", o.total);
    set(prefix + ".t1", o.t1_consumption);
    set(prefix + ".t2", o.t2_pollution);
    set(prefix + ".t3", o.t3_taxation);
    set(prefix + ".t4", o.t4_abatement);
  }

  /// Records name, size, and checksum of each file, in the given order.
  void add_inventory(const std::vector<std::filesystem::path>& files) {
    set("files.count", std::to_string(files.size()));
    for (std::size_t i = 0; i < files.size(); ++i) {
      const std::string p = "files." + std::to_string(i);
      set(p + ".name", files[i].filename().string());
      set(p + ".bytes", std::to_string(std::filesystem::file_size(files[i])));
      set(p + ".fnv1a64", hex64(file_checksum(files[i])));
    }
  }

  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  [[nodiscard]] std::string render() const {
    std::string out = "# run manifest\n";
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  void write(const std::filesystem::path& path) const { detail::write_file(path, render()); }

  /// Parses text produced by render().
  static std::vector<std::pair<std::string, std::string>> parse(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    for (std::string line; std::getline(in, line);) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) throw IoError(path.string() + ": malformed line '" + line + "'");
      out.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace ecocontrol
