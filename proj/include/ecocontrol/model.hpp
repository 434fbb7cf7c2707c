#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace ecocontrol {

/// Scalar constants of the capital/pollution system and the objective.
///
/// Defaults are the reference scenario values; every field can be
/// overridden from a scenario file.
struct ModelParams {
  double d1 = 1.0;       // capital diffusivity
  double d2 = 1.0;       // pollution diffusivity
  double delta1 = 0.05;  // capital depreciation
  double delta2 = 0.03;  // natural pollution decay
  double A = 1.0;        // technology level (spatially constant)
  double theta = 2.0;    // pollution produced per unit output
  double alpha1 = 0.7;
  double alpha2 = 1.0;
  double gamma = 4.0;
  double chi = 1.0;        // pollution feedback g(p) = 1 + chi p^2
  double phi_const = 0.3;  // constant nonlocal kernel value
  double s = 0.6;          // saving factor, 1 - c - tau >= s
  double L = 0.5;          // abatement cap
  double beta0 = 1.0;
  double beta1 = 1.0;
  double beta2 = 1.0;
  double T = 5.0;
  double dt = 0.05;

  /// Number of time steps; only valid after validate().
  [[nodiscard]] int steps() const {
    return static_cast<int>(std::lround(T / dt));
  }

  /// Upper bound of c + tau.
  [[nodiscard]] double consumption_budget() const { return 1.0 - s; }

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const {
    auto require = [](bool ok, const std::string& what) {
      if (!ok) throw std::invalid_argument("invalid model parameter: " + what);
    };
    require(d1 >= 0 && d2 >= 0, "diffusivities must be >= 0");
    require(delta1 >= 0 && delta2 >= 0, "decay rates must be >= 0");
    require(beta0 >= 0 && beta1 >= 0 && beta2 >= 0, "objective weights must be >= 0");
    require(A >= 0, "A must be >= 0");
    require(theta >= 0, "theta must be >= 0");
    require(alpha1 >= 0 && alpha2 >= 0, "alpha1, alpha2 must be >= 0");
    require(gamma >= 1, "gamma must be >= 1");
    require(chi >= 0, "chi must be >= 0");
    require(phi_const >= 0, "phi must be >= 0");
    require(s > 0 && s < 1, "s must lie in (0,1)");
    require(L >= 0, "L must be >= 0");
    require(dt > 0, "dt must be > 0");
    require(T > 0, "T must be > 0");
    const double ratio = T / dt;
    require(std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio),
            "T must be an integer multiple of dt");
  }
};

/// f(r) = alpha1 r^gamma / (1 + alpha2 r^gamma)
inline double production(double r, const ModelParams& m) {
  if (!(r >= 0)) throw std::domain_error("production: capital density must be >= 0");
  const double rg = std::pow(r, m.gamma);
  return m.alpha1 * rg / (1.0 + m.alpha2 * rg);
}

/// f'(r) = alpha1 gamma r^(gamma-1) / (1 + alpha2 r^gamma)^2
inline double production_deriv(double r, const ModelParams& m) {
  if (!(r >= 0)) throw std::domain_error("production_deriv: capital density must be >= 0");
  if (r == 0.0) return m.gamma == 1.0 ? m.alpha1 : 0.0;
  const double rg = std::pow(r, m.gamma);
  const double denom = 1.0 + m.alpha2 * rg;
  return m.alpha1 * m.gamma * (rg / r) / (denom * denom);
}

/// g(p) = 1 + chi p^2
inline double pollution_feedback(double p, const ModelParams& m) {
  if (!(p >= 0)) throw std::domain_error("pollution_feedback: pollution density must be >= 0");
  return 1.0 + m.chi * p * p;
}

/// -d/dp [A / g(p)] = 2 A chi p / (1 + chi p^2)^2
inline double feedback_grad_factor(double p, double A, const ModelParams& m) {
  if (!(p >= 0)) throw std::domain_error("feedback_grad_factor: pollution density must be >= 0");
  const double g = 1.0 + m.chi * p * p;
  return 2.0 * A * m.chi * p / (g * g);
}

/// Capital left for production after regional taxation.
constexpr double effective_capital(double k, double tau, bool in_region) {
  return in_region ? (1.0 - tau) * k : k;
}

}  // namespace ecocontrol
