#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ecocontrol/linsolve.hpp"
#include "ecocontrol/grid.hpp"
#include "ecocontrol/model.hpp"
#include "ecocontrol/region.hpp"

namespace ecocontrol {

/// Fields at t_n = n dt, n = 0..steps.
struct Trajectory {
  std::vector<Field> levels;
  double dt = 0.0;

  static Trajectory constant(const Grid& grid, int steps, double dt, double value) {
    return {std::vector<Field>(static_cast<std::size_t>(steps) + 1, Field::constant(grid, value)), dt};
  }

  [[nodiscard]] std::size_t size() const { return levels.size(); }
  [[nodiscard]] int steps() const { return static_cast<int>(levels.size()) - 1; }
  Field& operator[](std::size_t n) { return levels[n]; }
  const Field& operator[](std::size_t n) const { return levels[n]; }
  [[nodiscard]] double min() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& f : levels) m = std::min(m, f.min());
    return m;
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Consumption c on all of Omega, taxation tau and abatement xi on omega.
struct ControlSet {
  Trajectory c;
  Trajectory tau;
  Trajectory xi;
  RegionMask mask;

  /// Spatially constant controls; tau and xi are zeroed outside the mask.
  static ControlSet uniform(const Grid& grid, const ModelParams& m, const RegionMask& mask,
                            double c0, double tau0, double xi0) {
    ControlSet u{Trajectory::constant(grid, m.steps(), m.dt, c0),
                 Trajectory::constant(grid, m.steps(), m.dt, tau0),
                 Trajectory::constant(grid, m.steps(), m.dt, xi0), mask};
    u.zero_outside_mask();
    return u;
  }

  void zero_outside_mask() {
    for (std::size_t n = 0; n < tau.size(); ++n) {
      for (std::size_t i = 0; i < tau[n].size(); ++i) {
        if (!mask.contains(i)) {
          tau[n][i] = 0.0;
          xi[n][i] = 0.0;
        }
      }
    }
  }

  /// Empty string when every control-set invariant holds exactly, otherwise a
  /// description of the first violation.
  [[nodiscard]] std::string violation(const ModelParams& m) const {
    const double budget = m.consumption_budget();
    if (c.size() != tau.size() || c.size() != xi.size()) return "trajectory lengths differ";
    for (std::size_t n = 0; n < c.size(); ++n) {
      for (std::size_t i = 0; i < c[n].size(); ++i) {
        const double cv = c[n][i], tv = tau[n][i], xv = xi[n][i];
        auto where = [&] { return " at level " + std::to_string(n) + ", node " + std::to_string(i); };
        if (!(cv >= 0) || !(tv >= 0)) return "negative c or tau" + where();
        if (!(cv + tv <= budget)) return "c + tau exceeds 1 - s" + where();
        if (!(xv >= 0) || !(xv <= m.L)) return "xi outside [0, L]" + where();
        if (!mask.contains(i) && (tv != 0.0 || xv != 0.0)) return "tau or xi nonzero outside omega" + where();
      }
    }
    return {};
  }

  [[nodiscard]] bool feasible(const ModelParams& m) const { return violation(m).empty(); }

  friend bool operator==(const ControlSet& a, const ControlSet& b) {
    return a.c == b.c && a.tau == b.tau && a.xi == b.xi;
  }
};

/// Perturbation direction (v1, v2, v3) for (c, tau, xi).
struct ControlDirection {
  Trajectory v1;
  Trajectory v2;
  Trajectory v3;
};

struct StatePair {
  Trajectory k;
  Trajectory p;
};

struct AdjointPair {
  Trajectory lambda_k;
  Trajectory lambda_p;
};

/// Failure of a time-marching solve; `step` is the offending step index.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, int step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  [[nodiscard]] int step() const { return step_; }

 private:
  int step_;
};

/// Mesh, parameters, and the factored time-stepping matrices.
///
/// The forward matrices are M/dt + A_i. The costate matrices additionally
/// carry the linear decay implicitly: M (1/dt + delta_i) + A_i. All matrices
/// are time independent and factored once.
class Discretization {
 public:
  Discretization(Grid grid, ModelParams params)
      : Discretization(std::move(grid), params, NonlocalKernel::constant(params.phi_const)) {}

  Discretization(Grid grid, ModelParams params, NonlocalKernel kernel)
      : grid_(std::move(grid)), params_(params), kernel_(std::move(kernel)) {
    params_.validate();
    mass_ = assemble_lumped_mass(grid_);
    stiff_k_ = assemble_stiffness(grid_, params_.d1);
    stiff_p_ = assemble_stiffness(grid_, params_.d2);
    const std::size_t n = grid_.node_count();
    std::vector<double> shift(n);
    auto factor = [&](const SparseMatrix& a, double rate) {
      for (std::size_t i = 0; i < n; ++i) shift[i] = mass_[i] * rate;
      return ShiftedCholesky(a, shift);
    };
    const double inv_dt = 1.0 / params_.dt;
    forward_k_ = factor(stiff_k_, inv_dt);
    forward_p_ = factor(stiff_p_, inv_dt);
    backward_k_ = factor(stiff_k_, inv_dt + params_.delta1);
    backward_p_ = factor(stiff_p_, inv_dt + params_.delta2);
  }

  [[nodiscard]] const Grid& grid() const { return grid_; }
  [[nodiscard]] const ModelParams& params() const { return params_; }
  [[nodiscard]] const NonlocalKernel& kernel() const { return kernel_; }
  [[nodiscard]] const std::vector<double>& lumped_mass() const { return mass_; }
  [[nodiscard]] const SparseMatrix& stiffness_k() const { return stiff_k_; }
  [[nodiscard]] const SparseMatrix& stiffness_p() const { return stiff_p_; }
  [[nodiscard]] std::size_t nodes() const { return grid_.node_count(); }
  [[nodiscard]] int steps() const { return params_.steps(); }
  /// Unknowns of the coupled per-step linear system for (K, P).
  [[nodiscard]] std::size_t system_unknowns() const { return 2 * grid_.node_count(); }

  [[nodiscard]] double integrate(const Field& f) const { return ecocontrol::integrate(mass_, f); }
  [[nodiscard]] Field nonlocal(const Field& source, bool transpose = false) const {
    return nonlocal_apply(grid_, mass_, source, kernel_, transpose);
  }

  /// Solves (M * rate + A) x = M * rhs_density in place, rhs given per node.
  void solve_forward_k(Field& x) const { scale_and_solve(forward_k_, x); }
  void solve_forward_p(Field& x) const { scale_and_solve(forward_p_, x); }
  void solve_backward_k(Field& x) const { scale_and_solve(backward_k_, x); }
  void solve_backward_p(Field& x) const { scale_and_solve(backward_p_, x); }

 private:
  void scale_and_solve(const ShiftedCholesky& chol, Field& x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mass_[i];
    chol.solve(x.span());
  }

  Grid grid_;
  ModelParams params_;
  NonlocalKernel kernel_;
  std::vector<double> mass_;
  SparseMatrix stiff_k_;
  SparseMatrix stiff_p_;
  ShiftedCholesky forward_k_;
  ShiftedCholesky forward_p_;
  ShiftedCholesky backward_k_;
  ShiftedCholesky backward_p_;
};

namespace detail {

// Production is defined on [0, inf); slight negative undershoots of the
// discrete capital see the boundary value.
inline double f_clamped(double r, const ModelParams& m) { return production(std::max(r, 0.0), m); }
inline double fprime_clamped(double r, const ModelParams& m) {
  return r > 0.0 ? production_deriv(r, m) : production_deriv(0.0, m);
}
inline double g_unchecked(double p, const ModelParams& m) { return 1.0 + m.chi * p * p; }
inline double g_grad_unchecked(double p, double A, const ModelParams& m) {
  const double g = g_unchecked(p, m);
  return 2.0 * A * m.chi * p / (g * g);
}

inline void require_sizes(const Discretization& d, std::initializer_list<const Field*> fields,
                          const RegionMask& mask, const char* what) {
  for (const Field* f : fields) require_on_grid(d.grid(), *f, what);
  if (mask.size() != d.nodes()) throw std::invalid_argument(std::string(what) + ": mask size mismatch");
}

inline void require_controls(const Discretization& d, const ControlSet& u, const char* what) {
  const auto levels = static_cast<std::size_t>(d.steps()) + 1;
  if (u.c.size() != levels || u.tau.size() != levels || u.xi.size() != levels)
    throw std::invalid_argument(std::string(what) + ": control trajectories must have T/dt + 1 levels");
  if (u.mask.size() != d.nodes()) throw std::invalid_argument(std::string(what) + ": mask size mismatch");
}

}  // namespace detail

/// One semi-implicit step of the state system: diffusion by backward Euler,
/// every reaction term by forward Euler at level n.
inline std::pair<Field, Field> step_state(const Discretization& d, const Field& K, const Field& P,
                                          const Field& C, const Field& Tau, const Field& Xi,
                                          const RegionMask& mask) {
  detail::require_sizes(d, {&K, &P, &C, &Tau, &Xi}, mask, "step_state");
  const ModelParams& m = d.params();
  const std::size_t n = d.nodes();
  const double inv_dt = 1.0 / m.dt;

  Field output(n);
  for (std::size_t i = 0; i < n; ++i)
    output[i] = detail::f_clamped((1.0 - mask.indicator(i) * Tau[i]) * K[i], m);
  const Field emitted = d.nonlocal(output);

  Field k_next(n), p_next(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g1 = m.A * output[i] / detail::g_unchecked(P[i], m) - m.delta1 * K[i] - C[i] * K[i];
    const double g2 = m.theta * emitted[i] - m.delta2 * P[i] - mask.indicator(i) * Xi[i] * P[i];
    k_next[i] = K[i] * inv_dt + g1;
    p_next[i] = P[i] * inv_dt + g2;
  }
  d.solve_forward_k(k_next);
  d.solve_forward_p(p_next);
  return {std::move(k_next), std::move(p_next)};
}

/// March the state system from (k0, p0) over [0, T].
inline StatePair solve_forward(const Discretization& d, const ControlSet& u, const Field& k0,
                               const Field& p0) {
  detail::require_controls(d, u, "solve_forward");
  require_on_grid(d.grid(), k0, "solve_forward");
  require_on_grid(d.grid(), p0, "solve_forward");
  if (k0.min() < 0 || p0.min() < 0)
    throw std::invalid_argument("solve_forward: initial data must be nonnegative");
  const int steps = d.steps();
  StatePair s;
  s.k.dt = s.p.dt = d.params().dt;
  s.k.levels.reserve(static_cast<std::size_t>(steps) + 1);
  s.p.levels.reserve(static_cast<std::size_t>(steps) + 1);
  s.k.levels.push_back(k0);
  s.p.levels.push_back(p0);
  for (int n = 0; n < steps; ++n) {
    const auto idx = static_cast<std::size_t>(n);
    auto [k, p] = step_state(d, s.k[idx], s.p[idx], u.c[idx], u.tau[idx], u.xi[idx], u.mask);
    if (!k.all_finite() || !p.all_finite())
      throw SolverError("solve_forward: non-finite state", n + 1);
    s.k.levels.push_back(std::move(k));
    s.p.levels.push_back(std::move(p));
  }
  return s;
}

/// One backward step of the costate system, from level n+1 to level n.
///
/// State and controls are taken at level n, the costates on the right-hand
/// side at level n+1. Diffusion and the linear decay delta_i are implicit;
/// every other source and coupling term is explicit.
inline std::pair<Field, Field> step_adjoint(const Discretization& d, const Field& Lk, const Field& Lp,
                                            const Field& K, const Field& P, const Field& C,
                                            const Field& Tau, const Field& Xi, const RegionMask& mask) {
  detail::require_sizes(d, {&Lk, &Lp, &K, &P, &C, &Tau, &Xi}, mask, "step_adjoint");
  const ModelParams& m = d.params();
  const std::size_t n = d.nodes();
  const double inv_dt = 1.0 / m.dt;

  const Field priced_emission = d.nonlocal(Lp, /*transpose=*/true);
  Field lk_prev(n), lp_prev(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ind = mask.indicator(i);
    const double keep = 1.0 - ind * Tau[i];
    const double eff = keep * K[i];
    const double fp = detail::fprime_clamped(eff, m);
    const double g = detail::g_unchecked(P[i], m);
    const double src_k = C[i] - m.beta1 * ind * Tau[i] + Lk[i] * (m.A * keep * fp / g - C[i]) +
                         keep * fp * m.theta * priced_emission[i];
    const double src_p = -m.beta0 - m.beta2 * ind * Xi[i] -
                         Lk[i] * detail::g_grad_unchecked(P[i], m.A, m) * detail::f_clamped(eff, m) -
                         ind * Xi[i] * Lp[i];
    lk_prev[i] = Lk[i] * inv_dt + src_k;
    lp_prev[i] = Lp[i] * inv_dt + src_p;
  }
  d.solve_backward_k(lk_prev);
  d.solve_backward_p(lp_prev);
  return {std::move(lk_prev), std::move(lp_prev)};
}

/// Backward sweep of the costates from zero final data.
inline AdjointPair solve_adjoint(const Discretization& d, const StatePair& s, const ControlSet& u) {
  detail::require_controls(d, u, "solve_adjoint");
  const int steps = d.steps();
  if (s.k.steps() != steps || s.p.steps() != steps)
    throw std::invalid_argument("solve_adjoint: state trajectory incomplete");
  const auto levels = static_cast<std::size_t>(steps) + 1;
  AdjointPair a;
  a.lambda_k.dt = a.lambda_p.dt = d.params().dt;
  a.lambda_k.levels.assign(levels, Field(d.nodes(), 0.0));
  a.lambda_p.levels.assign(levels, Field(d.nodes(), 0.0));
  for (int n = steps - 1; n >= 0; --n) {
    const auto i = static_cast<std::size_t>(n);
    auto [lk, lp] = step_adjoint(d, a.lambda_k[i + 1], a.lambda_p[i + 1], s.k[i], s.p[i], u.c[i],
                                 u.tau[i], u.xi[i], u.mask);
    if (!lk.all_finite() || !lp.all_finite())
      throw SolverError("solve_adjoint: non-finite costate", n);
    a.lambda_k[i] = std::move(lk);
    a.lambda_p[i] = std::move(lp);
  }
  return a;
}

/// Linearized state response (z_k, z_p) to a control perturbation v, with
/// zero initial data. Each step is the exact derivative of step_state, so
/// (k^{u + eps v} - k^u) / eps -> z_k at rate O(eps).
inline std::pair<Trajectory, Trajectory> solve_sensitivity(const Discretization& d, const StatePair& s,
                                                           const ControlSet& u,
                                                           const ControlDirection& v) {
  detail::require_controls(d, u, "solve_sensitivity");
  const int steps = d.steps();
  const auto levels = static_cast<std::size_t>(steps) + 1;
  if (s.k.size() != levels || v.v1.size() != levels || v.v2.size() != levels || v.v3.size() != levels)
    throw std::invalid_argument("solve_sensitivity: trajectory length mismatch");
  const ModelParams& m = d.params();
  const std::size_t nn = d.nodes();
  const double inv_dt = 1.0 / m.dt;

  Trajectory zk{std::vector<Field>(levels, Field(nn, 0.0)), m.dt};
  Trajectory zp{std::vector<Field>(levels, Field(nn, 0.0)), m.dt};
  Field d_output(nn);
  for (int n = 0; n < steps; ++n) {
    const auto t = static_cast<std::size_t>(n);
    const Field& K = s.k[t];
    const Field& P = s.p[t];
    for (std::size_t i = 0; i < nn; ++i) {
      const double ind = u.mask.indicator(i);
      const double keep = 1.0 - ind * u.tau[t][i];
      const double fp = detail::fprime_clamped(keep * K[i], m);
      d_output[i] = fp * (keep * zk[t][i] - ind * K[i] * v.v2[t][i]);
    }
    const Field d_emitted = d.nonlocal(d_output);
    Field k_next(nn), p_next(nn);
    for (std::size_t i = 0; i < nn; ++i) {
      const double ind = u.mask.indicator(i);
      const double eff = (1.0 - ind * u.tau[t][i]) * K[i];
      const double dg1 = m.A / detail::g_unchecked(P[i], m) * d_output[i] - m.delta1 * zk[t][i] -
                         u.c[t][i] * zk[t][i] - v.v1[t][i] * K[i] -
                         detail::g_grad_unchecked(P[i], m.A, m) * detail::f_clamped(eff, m) * zp[t][i];
      const double dg2 = m.theta * d_emitted[i] - m.delta2 * zp[t][i] - ind * u.xi[t][i] * zp[t][i] -
                         ind * v.v3[t][i] * P[i];
      k_next[i] = zk[t][i] * inv_dt + dg1;
      p_next[i] = zp[t][i] * inv_dt + dg2;
    }
    d.solve_forward_k(k_next);
    d.solve_forward_p(p_next);
    if (!k_next.all_finite() || !p_next.all_finite())
      throw SolverError("solve_sensitivity: non-finite value", n + 1);
    zk[t + 1] = std::move(k_next);
    zp[t + 1] = std::move(p_next);
  }
  return {std::move(zk), std::move(zp)};
}

}  // namespace ecocontrol
