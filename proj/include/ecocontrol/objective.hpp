#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ecocontrol/dynamics.hpp"

namespace ecocontrol {

/// The four weighted terms of the objective; total = t1 - t2 - t3 - t4.
struct ObjectiveBreakdown {
  double t1_consumption = 0.0;
  double t2_pollution = 0.0;
  double t3_taxation = 0.0;
  double t4_abatement = 0.0;
  double total = 0.0;
};

/// Space by lumped quadrature, time by left-endpoint rectangles over
/// levels 0..N-1 (the levels whose controls drive a step).
inline ObjectiveBreakdown evaluate_objective(const Discretization& d, const StatePair& s,
                                             const ControlSet& u) {
  detail::require_controls(d, u, "evaluate_objective");
  const auto levels = static_cast<std::size_t>(d.steps()) + 1;
  if (s.k.size() != levels || s.p.size() != levels)
    throw std::invalid_argument("evaluate_objective: trajectory lengths differ");
  const ModelParams& m = d.params();
  const auto& mass = d.lumped_mass();
  double consumption = 0.0, pollution = 0.0, taxation = 0.0, abatement = 0.0;
  for (std::size_t n = 0; n + 1 < levels; ++n) {
    double c_acc = 0.0, p_acc = 0.0, t_acc = 0.0, x_acc = 0.0;
    for (std::size_t i = 0; i < d.nodes(); ++i) {
      const double ind = u.mask.indicator(i);
      c_acc += mass[i] * u.c[n][i] * s.k[n][i];
      p_acc += mass[i] * s.p[n][i];
      t_acc += mass[i] * ind * u.tau[n][i] * s.k[n][i];
      x_acc += mass[i] * ind * u.xi[n][i] * s.p[n][i];
    }
    consumption += c_acc;
    pollution += p_acc;
    taxation += t_acc;
    abatement += x_acc;
  }
  ObjectiveBreakdown b;
  b.t1_consumption = m.dt * consumption;
  b.t2_pollution = m.beta0 * m.dt * pollution;
  b.t3_taxation = m.beta1 * m.dt * taxation;
  b.t4_abatement = m.beta2 * m.dt * abatement;
  b.total = b.t1_consumption - b.t2_pollution - b.t3_taxation - b.t4_abatement;
  return b;
}

/// Costate level that prices the controls of level n: the controls at t_n act
/// on the step t_n -> t_{n+1}, so they see the costate at t_{n+1}.
inline std::size_t pricing_level(const Discretization& d, std::size_t n) {
  return std::min(n + 1, static_cast<std::size_t>(d.steps()));
}

/// Taxation sensitivity field at level n:
/// beta1 + f'((1 - I tau) k) (A lambda_k / g(p) + theta \int lambda_p phi).
inline Field beta_star(const Discretization& d, const StatePair& s, const AdjointPair& a,
                       const ControlSet& u, std::size_t n) {
  const ModelParams& m = d.params();
  const std::size_t q = pricing_level(d, n);
  const Field& lk = a.lambda_k[q];
  const Field priced_emission = d.nonlocal(a.lambda_p[q], /*transpose=*/true);
  Field out(d.nodes());
  for (std::size_t i = 0; i < d.nodes(); ++i) {
    const double eff = (1.0 - u.mask.indicator(i) * u.tau[n][i]) * s.k[n][i];
    out[i] = m.beta1 + detail::fprime_clamped(eff, m) *
                           (m.A * lk[i] / detail::g_unchecked(s.p[n][i], m) + m.theta * priced_emission[i]);
  }
  return out;
}

/// Adjoint form of dI(u)(v).
inline double directional_derivative(const Discretization& d, const StatePair& s, const AdjointPair& a,
                                     const ControlSet& u, const ControlDirection& v) {
  const ModelParams& m = d.params();
  const auto& mass = d.lumped_mass();
  const auto steps = static_cast<std::size_t>(d.steps());
  double total = 0.0;
  for (std::size_t n = 0; n < steps; ++n) {
    const std::size_t q = pricing_level(d, n);
    const Field bstar = beta_star(d, s, a, u, n);
    double acc = 0.0;
    for (std::size_t i = 0; i < d.nodes(); ++i) {
      const double ind = u.mask.indicator(i);
      acc += mass[i] * (s.k[n][i] * (v.v1[n][i] * (1.0 - a.lambda_k[q][i]) - ind * v.v2[n][i] * bstar[i]) -
                        s.p[n][i] * v.v3[n][i] * ind * (m.beta2 + a.lambda_p[q][i]));
    }
    total += acc;
  }
  return m.dt * total;
}

namespace detail {
constexpr double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

/// Sign-rule ascent direction: v1 = sgn(1 - lambda_k), v2 = -sgn(beta*),
/// v3 = -sgn(beta2 + lambda_p), the last two only on omega; sgn(0) = 0.
inline ControlDirection ascent_direction(const Discretization& d, const StatePair& s,
                                         const AdjointPair& a, const ControlSet& u) {
  const ModelParams& m = d.params();
  const auto levels = static_cast<std::size_t>(d.steps()) + 1;
  const std::size_t nn = d.nodes();
  ControlDirection v{Trajectory{std::vector<Field>(levels, Field(nn)), m.dt},
                     Trajectory{std::vector<Field>(levels, Field(nn)), m.dt},
                     Trajectory{std::vector<Field>(levels, Field(nn)), m.dt}};
  for (std::size_t n = 0; n < levels; ++n) {
    const std::size_t q = pricing_level(d, n);
    const Field bstar = beta_star(d, s, a, u, n);
    for (std::size_t i = 0; i < nn; ++i) {
      v.v1[n][i] = detail::sign_of(1.0 - a.lambda_k[q][i]);
      if (u.mask.contains(i)) {
        v.v2[n][i] = -detail::sign_of(bstar[i]);
        v.v3[n][i] = -detail::sign_of(m.beta2 + a.lambda_p[q][i]);
      }
    }
  }
  return v;
}

/// Euclidean projection of (c, tau) onto {c >= 0, tau >= 0, c + tau <= budget}.
/// Feasible input is returned unchanged.
inline std::pair<double, double> project_consumption_tax(double c, double tau, double budget) {
  if (c >= 0 && tau >= 0 && c + tau <= budget) return {c, tau};
  // Nearest point over the three edges of the triangle.
  const double shift = 0.5 * (c + tau - budget);
  const double hc = std::clamp(c - shift, 0.0, budget);
  double ht = budget - hc;
  while (hc + ht > budget) ht = std::nextafter(ht, 0.0);
  const std::pair<double, double> candidates[3] = {
      {hc, ht}, {std::clamp(c, 0.0, budget), 0.0}, {0.0, std::clamp(tau, 0.0, budget)}};
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < 3; ++k) {
    const double dc = candidates[k].first - c, dt = candidates[k].second - tau;
    const double dist = dc * dc + dt * dt;
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return candidates[best];
}

/// Nodewise projection of a control set onto the admissible set.
inline void project_controls(ControlSet& u, const ModelParams& m) {
  const double budget = m.consumption_budget();
  for (std::size_t n = 0; n < u.c.size(); ++n) {
    for (std::size_t i = 0; i < u.c[n].size(); ++i) {
      if (u.mask.contains(i)) {
        auto [c, t] = project_consumption_tax(u.c[n][i], u.tau[n][i], budget);
        u.c[n][i] = c;
        u.tau[n][i] = t;
        u.xi[n][i] = std::clamp(u.xi[n][i], 0.0, m.L);
      } else {
        u.c[n][i] = std::clamp(u.c[n][i], 0.0, budget);
        u.tau[n][i] = 0.0;
        u.xi[n][i] = 0.0;
      }
    }
  }
}

/// Projection of u + eps0 v onto the admissible set.
inline ControlSet feasible_step(const ControlSet& u, const ControlDirection& v, double eps0,
                                const ModelParams& m) {
  if (!(eps0 >= 0)) throw std::invalid_argument("feasible_step: eps0 must be >= 0");
  ControlSet out = u;
  for (std::size_t n = 0; n < out.c.size(); ++n) {
    for (std::size_t i = 0; i < out.c[n].size(); ++i) {
      out.c[n][i] += eps0 * v.v1[n][i];
      out.tau[n][i] += eps0 * v.v2[n][i];
      out.xi[n][i] += eps0 * v.v3[n][i];
    }
  }
  project_controls(out, m);
  return out;
}

/// eta u_old + (1 - eta) u_new, projected to absorb rounding at the boundary.
inline ControlSet blend_controls(const ControlSet& u_old, const ControlSet& u_new, double eta,
                                 const ModelParams& m) {
  if (eta == 1.0) return u_old;
  if (eta == 0.0) return u_new;
  ControlSet out = u_new;
  auto mix = [eta](Trajectory& dst, const Trajectory& a) {
    for (std::size_t n = 0; n < dst.size(); ++n)
      for (std::size_t i = 0; i < dst[n].size(); ++i) dst[n][i] += eta * (a[n][i] - dst[n][i]);
  };
  mix(out.c, u_old.c);
  mix(out.tau, u_old.tau);
  mix(out.xi, u_old.xi);
  project_controls(out, m);
  return out;
}

struct LineSearchResult {
  double eta = 1.0;
  ObjectiveBreakdown objective;
  ControlSet controls;
  StatePair state;
};

/// Known state and objective of u_old, so the eta = 1 sample is not re-solved.
struct EvaluatedControls {
  const StatePair* state = nullptr;
  const ObjectiveBreakdown* objective = nullptr;
};

/// Maximize I(eta u_old + (1 - eta) u_new) over eta in {0, 1/m, ..., 1}.
/// Every sample is a full forward solve. Ties go to the smaller eta.
inline LineSearchResult line_search(const Discretization& d, const ControlSet& u_old,
                                    const ControlSet& u_new, const Field& k0, const Field& p0,
                                    int samples, EvaluatedControls old = {}) {
  if (samples < 1) throw std::invalid_argument("line_search: need at least one eta interval");
  std::optional<LineSearchResult> best;
  for (int j = 0; j <= samples; ++j) {
    const double eta = j == samples ? 1.0 : static_cast<double>(j) / samples;
    LineSearchResult r;
    r.eta = eta;
    r.controls = blend_controls(u_old, u_new, eta, d.params());
    if (j == samples && old.state != nullptr && old.objective != nullptr) {
      r.state = *old.state;
      r.objective = *old.objective;
    } else {
      r.state = solve_forward(d, r.controls, k0, p0);
      r.objective = evaluate_objective(d, r.state, r.controls);
    }
    if (!best || r.objective.total > best->objective.total) best = std::move(r);
  }
  return std::move(*best);
}

struct OptimizerOptions {
  double eps0 = 0.05;
  int eta_samples = 10;
  double tolerance = 1e-6;
  int max_iter = 50;
};

enum class StopReason { tolerance, maxiter };

inline std::string to_string(StopReason r) { return r == StopReason::tolerance ? "tolerance" : "maxiter"; }

struct OptimizationResult {
  ControlSet controls;
  StatePair state;
  AdjointPair adjoint;
  ObjectiveBreakdown objective;
  /// Objective of every iterate computed, including the final candidate that
  /// triggered a tolerance stop.
  std::vector<ObjectiveBreakdown> objective_history;
  /// eta_history[j] produced iterate j + 1.
  std::vector<double> eta_history;
  StopReason stop_reason = StopReason::maxiter;
  int iterations = 0;
  /// Best-valued iterate seen; differs from `controls` after a tolerance stop.
  ControlSet best_controls;
  ObjectiveBreakdown best_objective;
  /// Smallest k or p value over every forward solve of the run.
  double min_state_value = 0.0;
};

/// Per-iteration hook: (iteration index, objective, eta).
using IterationCallback = std::function<void(int, const ObjectiveBreakdown&, double)>;

/// Projected sign-rule gradient ascent with a sampled line search.
///
/// Stops when I(iter+1) - I(iter) < tolerance, returning the iter-th
/// controls, or after max_iter accepted updates.
inline OptimizationResult optimize(const Discretization& d, ControlSet u0, const Field& k0,
                                   const Field& p0, const OptimizerOptions& opt,
                                   const IterationCallback& on_iteration = {}) {
  if (opt.max_iter < 0) throw std::invalid_argument("optimize: max_iter must be >= 0");
  if (!(opt.eps0 >= 0)) throw std::invalid_argument("optimize: eps0 must be >= 0");
  const ModelParams& m = d.params();
  auto check_feasible = [&m](const ControlSet& u, int iter) {
    if (const auto why = u.violation(m); !why.empty())
      throw std::logic_error("optimize: infeasible controls at iteration " + std::to_string(iter) + ": " + why);
  };
  check_feasible(u0, 0);

  OptimizationResult res;
  res.controls = std::move(u0);
  res.state = solve_forward(d, res.controls, k0, p0);
  res.objective = evaluate_objective(d, res.state, res.controls);
  res.objective_history.push_back(res.objective);
  res.min_state_value = std::min(res.state.k.min(), res.state.p.min());
  if (on_iteration) on_iteration(0, res.objective, 1.0);

  res.stop_reason = StopReason::maxiter;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    res.adjoint = solve_adjoint(d, res.state, res.controls);
    const ControlDirection v = ascent_direction(d, res.state, res.adjoint, res.controls);
    const ControlSet u_new = feasible_step(res.controls, v, opt.eps0, m);
    check_feasible(u_new, iter + 1);
    LineSearchResult ls = line_search(d, res.controls, u_new, k0, p0, opt.eta_samples,
                                      {&res.state, &res.objective});
    check_feasible(ls.controls, iter + 1);
    res.min_state_value = std::min({res.min_state_value, ls.state.k.min(), ls.state.p.min()});
    res.objective_history.push_back(ls.objective);
    res.eta_history.push_back(ls.eta);
    if (on_iteration) on_iteration(iter + 1, ls.objective, ls.eta);

    if (ls.objective.total - res.objective.total < opt.tolerance) {
      res.stop_reason = StopReason::tolerance;
      res.iterations = iter;
      res.best_controls = std::move(ls.controls);
      res.best_objective = ls.objective;
      break;
    }
    res.controls = std::move(ls.controls);
    res.state = std::move(ls.state);
    res.objective = ls.objective;
    res.iterations = iter + 1;
  }
  if (res.stop_reason == StopReason::maxiter) {
    res.best_controls = res.controls;
    res.best_objective = res.objective;
  }
  res.adjoint = solve_adjoint(d, res.state, res.controls);
  return res;
}

}  // namespace ecocontrol
