#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecocontrol/grid.hpp"

namespace ecocontrol {

/// Geometry of the control region omega.
struct RegionShape {
  enum class Kind { none, disk, whole };
  Kind kind = Kind::none;
  Point center{};
  double radius = 0.0;

  static RegionShape none() { return {}; }
  static RegionShape whole() { return {Kind::whole, {}, 0.0}; }
  static RegionShape disk(Point center, double radius) {
    if (!(radius >= 0)) throw std::invalid_argument("region: disk radius must be >= 0");
    return {Kind::disk, center, radius};
  }

  [[nodiscard]] bool contains(Point p) const {
    switch (kind) {
      case Kind::none: return false;
      case Kind::whole: return true;
      case Kind::disk: {
        const double dx = p.x - center.x, dy = p.y - center.y;
        return dx * dx + dy * dy <= radius * radius;
      }
    }
    return false;
  }
};

inline std::string to_string(RegionShape::Kind k) {
  switch (k) {
    case RegionShape::Kind::none: return "none";
    case RegionShape::Kind::disk: return "disk";
    case RegionShape::Kind::whole: return "whole";
  }
  return "none";
}

/// Node-wise indicator of omega.
class RegionMask {
 public:
  RegionMask() = default;
  RegionMask(const Grid& grid, RegionShape shape) : shape_(shape), flags_(grid.node_count(), 0) {
    for (std::size_t i = 0; i < flags_.size(); ++i) flags_[i] = shape.contains(grid.node(i)) ? 1 : 0;
  }

  [[nodiscard]] const RegionShape& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return flags_.size(); }
  [[nodiscard]] bool contains(std::size_t node) const { return flags_[node] != 0; }
  [[nodiscard]] double indicator(std::size_t node) const { return flags_[node] ? 1.0 : 0.0; }
  [[nodiscard]] std::size_t count() const {
    std::size_t c = 0;
    for (auto f : flags_) c += f;
    return c;
  }
  [[nodiscard]] bool empty() const { return count() == 0; }

 private:
  RegionShape shape_;
  std::vector<std::uint8_t> flags_;
};

}  // namespace ecocontrol
