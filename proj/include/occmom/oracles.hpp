#pragma once

// Ground-truth computations for the benchmark problems: RK4 simulation under a
// feedback policy, a semi-Lagrangian HJB grid for one state and one control,
// and the scalar Riccati equation of the LQR problem.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "occmom/poly.hpp"
#include "occmom/problem.hpp"

namespace occmom {

using Policy = std::function<std::vector<double>(double t, std::span<const double> x)>;

struct Trajectory {
  std::vector<double> t;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> u;
  double running_cost = 0.0;
  double terminal_cost = 0.0;
  double total_cost = 0.0;

  std::size_t size() const { return t.size(); }
};

/// Thrown when a simulated state leaves the state box.
class StateExitError : public std::runtime_error {
 public:
  StateExitError(double time, std::size_t state)
      : std::runtime_error("state x" + std::to_string(state + 1) + " left X at t = " + detail::format_number(time)), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

namespace detail {

inline std::vector<double> point_of(double t, std::span<const double> x, std::span<const double> u) {
  std::vector<double> p;
  p.reserve(1 + x.size() + u.size());
  p.push_back(t);
  p.insert(p.end(), x.begin(), x.end());
  p.insert(p.end(), u.begin(), u.end());
  return p;
}

inline std::vector<double> eval_dynamics(const ControlProblem& pr, double t, std::span<const double> x, std::span<const double> u) {
  const auto p = point_of(t, x, u);
  std::vector<double> dx(pr.f.size());
  for (std::size_t i = 0; i < pr.f.size(); ++i) dx[i] = pr.f[i].evaluate(p);
  return dx;
}

/// Composite Simpson weights on n+1 equally spaced nodes; a 3/8 panel closes odd n.
inline std::vector<double> simpson_weights(std::size_t n, double h) {
  std::vector<double> w(n + 1, 0.0);
  if (n == 1) {
    w[0] = w[1] = 0.5 * h;
    return w;
  }
  std::size_t even = (n % 2 == 0) ? n : n - 3;
  for (std::size_t i = 0; i + 2 <= even; i += 2) {
    w[i] += h / 3.0;
    w[i + 1] += 4.0 * h / 3.0;
    w[i + 2] += h / 3.0;
  }
  if (even != n) {
    w[even] += 3.0 * h / 8.0;
    w[even + 1] += 9.0 * h / 8.0;
    w[even + 2] += 9.0 * h / 8.0;
    w[even + 3] += 3.0 * h / 8.0;
  }
  return w;
}

}  // namespace detail

/// How the policy is sampled inside an integration step.
enum class ControlHold {
  Stage,  // feedback at every RK4 stage; cost by Simpson on the grid nodes
  Step,   // one control per step (as in the HJB scheme); cost integrated with the state
};

/// Classical RK4 under a feedback policy. The step is adjusted down so that it
/// divides the horizon. With ControlHold::Step the running cost is carried as an
/// extra RK4 component, which for a pure quadrature is Simpson's rule per step.
inline Trajectory simulate(const ControlProblem& problem, const Policy& policy, std::span<const double> x0, double h,
                           ControlHold hold = ControlHold::Stage) {
  const double t0 = problem.t0(), T = problem.T;
  const std::size_t n = problem.space.n_state();
  if (x0.size() != n) throw std::invalid_argument("initial state has wrong dimension");
  if (!(h > 0.0) || h > (T - t0) / 10.0) throw std::invalid_argument("simulation step must lie in (0, (T - t0)/10]");
  const auto steps = static_cast<std::size_t>(std::ceil((T - t0) / h - 1e-9));
  const double dt = (T - t0) / static_cast<double>(steps);
  constexpr double box_tol = 1e-9;

  auto control = [&](double t, std::span<const double> x) {
    std::vector<double> u = policy(t, x);
    if (u.size() != problem.space.m_control()) throw std::invalid_argument("policy returned wrong control dimension");
    return u;
  };
  auto check = [&](double t, const std::vector<double>& x) {
    for (std::size_t i = 0; i < n; ++i)
      if (!problem.X.intervals[i].contains(x[i], box_tol)) throw StateExitError(t, i);
  };
  auto running = [&](double t, const std::vector<double>& x, const std::vector<double>& u) {
    return problem.l.evaluate(detail::point_of(t, x, u));
  };
  auto axpy = [&](const std::vector<double>& a, double s, const std::vector<double>& d) {
    std::vector<double> r(a);
    for (std::size_t i = 0; i < n; ++i) r[i] += s * d[i];
    return r;
  };

  Trajectory tr;
  std::vector<double> x(x0.begin(), x0.end());
  check(t0, x);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = t0 + dt * static_cast<double>(k);
    tr.t.push_back(t);
    tr.x.push_back(x);
    tr.u.push_back(control(t, x));
    if (k == steps) break;
    const std::vector<double>& u0 = tr.u.back();
    auto stage_u = [&](double ts, const std::vector<double>& xs) { return hold == ControlHold::Step ? u0 : control(ts, xs); };
    const double tm = t + 0.5 * dt;
    const auto x2 = axpy(x, 0.5 * dt, detail::eval_dynamics(problem, t, x, u0));
    const auto u2 = stage_u(tm, x2);
    const auto k1 = detail::eval_dynamics(problem, t, x, u0);
    const auto k2 = detail::eval_dynamics(problem, tm, x2, u2);
    const auto x3 = axpy(x, 0.5 * dt, k2);
    const auto u3 = stage_u(tm, x3);
    const auto k3 = detail::eval_dynamics(problem, tm, x3, u3);
    const auto x4 = axpy(x, dt, k3);
    const auto u4 = stage_u(t + dt, x4);
    const auto k4 = detail::eval_dynamics(problem, t + dt, x4, u4);
    if (hold == ControlHold::Step)
      tr.running_cost += dt / 6.0 * (running(t, x, u0) + 2.0 * running(tm, x2, u2) + 2.0 * running(tm, x3, u3) + running(t + dt, x4, u4));
    for (std::size_t i = 0; i < n; ++i) x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    check(t + dt, x);
  }
  if (hold == ControlHold::Stage) {
    const auto w = detail::simpson_weights(steps, dt);
    for (std::size_t k = 0; k <= steps; ++k) tr.running_cost += w[k] * running(tr.t[k], tr.x[k], tr.u[k]);
  }
  tr.terminal_cost = problem.l_T.evaluate(detail::point_of(T, tr.x.back(), tr.u.back()));
  tr.total_cost = tr.running_cost + tr.terminal_cost;
  return tr;
}

inline Policy constant_policy(std::vector<double> u) {
  return [u = std::move(u)](double, std::span<const double>) { return u; };
}

// ---------------------------------------------------------------------------
// Semi-Lagrangian HJB grid (one state, one control).

struct ValueGrid {
  double t0 = 0.0, T = 1.0;
  double x_lo = 0.0, x_hi = 1.0;
  std::size_t nt = 0, nx = 0;  // intervals; nodes are nt+1 by nx+1
  std::vector<double> controls;
  std::vector<double> values;  // row-major by time

  double dt() const { return (T - t0) / static_cast<double>(nt); }
  double dx() const { return (x_hi - x_lo) / static_cast<double>(nx); }
  double time(std::size_t i) const { return t0 + dt() * static_cast<double>(i); }
  double state(std::size_t j) const { return x_lo + dx() * static_cast<double>(j); }
  double& at(std::size_t i, std::size_t j) { return values[i * (nx + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * (nx + 1) + j]; }

  /// Linear interpolation in x on time slice i; +inf outside [x_lo, x_hi].
  double slice(std::size_t i, double x) const {
    const double tol = 1e-12 * (1.0 + std::abs(x_hi - x_lo));
    if (x < x_lo - tol || x > x_hi + tol) return std::numeric_limits<double>::infinity();
    const double s = std::clamp((x - x_lo) / dx(), 0.0, static_cast<double>(nx));
    const auto j = std::min(static_cast<std::size_t>(s), nx - 1);
    const double w = s - static_cast<double>(j);
    const double a = at(i, j), b = at(i, j + 1);
    if (w == 0.0) return a;
    if (w == 1.0) return b;
    return (1.0 - w) * a + w * b;
  }

  /// Bilinear interpolation in (t, x).
  double operator()(double t, double x) const {
    const double s = std::clamp((t - t0) / dt(), 0.0, static_cast<double>(nt));
    const auto i = std::min(static_cast<std::size_t>(s), nt - 1);
    const double w = s - static_cast<double>(i);
    const double a = slice(i, x);
    if (w == 0.0) return a;
    const double b = slice(i + 1, x);
    return (1.0 - w) * a + w * b;
  }
};

namespace detail {

/// One RK4 step of (x' = f, c' = l) with the control held fixed.
struct FootStep {
  double x = 0.0;
  double cost = 0.0;
};

inline FootStep augmented_rk4(const ControlProblem& pr, double x, double u, double h) {
  std::vector<double> p{0.0, x, u};
  auto rhs = [&](double xs) {
    p[1] = xs;
    return std::pair{pr.f[0].evaluate(p), pr.l.evaluate(p)};
  };
  const auto [f1, l1] = rhs(x);
  const auto [f2, l2] = rhs(x + 0.5 * h * f1);
  const auto [f3, l3] = rhs(x + 0.5 * h * f2);
  const auto [f4, l4] = rhs(x + h * f3);
  return {x + h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4), h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)};
}

inline void require_scalar(const ControlProblem& pr) {
  if (pr.space.n_state() != 1 || pr.space.m_control() != 1) throw std::invalid_argument("HJB grid oracle needs one state and one control");
}

}  // namespace detail

inline std::vector<double> control_samples(const Interval& U, std::size_t nu) {
  if (nu < 2) throw std::invalid_argument("need at least two control samples");
  std::vector<double> u(nu);
  for (std::size_t k = 0; k < nu; ++k) u[k] = U.lo + (U.hi - U.lo) * static_cast<double>(k) / static_cast<double>(nu - 1);
  return u;
}

/// Backward dynamic programming v(t_i, x_j) = min_u [c(x_j, u) + v(t_{i+1}, foot(x_j, u))]
/// with foot and step cost c from one RK4 step, v(T, .) = l_T.
inline ValueGrid hjb_grid_solve(const ControlProblem& problem, std::size_t nx = 2000, std::size_t nt = 2000, std::size_t nu = 201) {
  problem.validate();
  detail::require_scalar(problem);
  if (nx < 10 || nt < 10) throw std::invalid_argument("HJB grid too coarse: need nx, nt >= 10");
  for (const auto& fi : problem.f)
    if (fi.depends_on(VariableSpace::time())) throw std::invalid_argument("HJB oracle assumes time-invariant dynamics");

  ValueGrid g;
  g.t0 = problem.t0();
  g.T = problem.T;
  g.x_lo = problem.X.intervals[0].lo;
  g.x_hi = problem.X.intervals[0].hi;
  g.nt = nt;
  g.nx = nx;
  g.controls = control_samples(problem.U.intervals[0], nu);
  g.values.assign((nt + 1) * (nx + 1), 0.0);

  const double inf = std::numeric_limits<double>::infinity();
  const Interval& XT = problem.X_T.intervals[0];
  for (std::size_t j = 0; j <= nx; ++j) {
    const double x = g.state(j);
    g.at(nt, j) = XT.contains(x, 1e-12) ? problem.l_T.evaluate(std::vector<double>{g.T, x, 0.0}) : inf;
  }

  // Feet and weights do not depend on time: precompute them once.
  struct Foot {
    std::size_t j = 0;
    double w = 0.0;
    double cost = 0.0;
    bool inside = false;
  };
  const double h = g.dt(), dx = g.dx();
  std::vector<Foot> feet((nx + 1) * nu);
  for (std::size_t j = 0; j <= nx; ++j)
    for (std::size_t k = 0; k < nu; ++k) {
      const auto step = detail::augmented_rk4(problem, g.state(j), g.controls[k], h);
      Foot& ft = feet[j * nu + k];
      ft.cost = step.cost;
      const double tol = 1e-12 * (1.0 + g.x_hi - g.x_lo);
      if (step.x < g.x_lo - tol || step.x > g.x_hi + tol) continue;
      const double s = std::clamp((step.x - g.x_lo) / dx, 0.0, static_cast<double>(nx));
      ft.j = std::min(static_cast<std::size_t>(s), nx - 1);
      ft.w = s - static_cast<double>(ft.j);
      ft.inside = true;
    }

  for (std::size_t i = nt; i-- > 0;) {
    const double* next = &g.values[(i + 1) * (nx + 1)];
    double* cur = &g.values[i * (nx + 1)];
    for (std::size_t j = 0; j <= nx; ++j) {
      double best = inf;
      const Foot* fj = &feet[j * nu];
      for (std::size_t k = 0; k < nu; ++k) {
        if (!fj[k].inside) continue;
        const double a = next[fj[k].j], b = next[fj[k].j + 1];
        double v;
        if (fj[k].w == 0.0)
          v = a;
        else if (!std::isfinite(a) || !std::isfinite(b))
          v = inf;
        else
          v = (1.0 - fj[k].w) * a + fj[k].w * b;
        best = std::min(best, fj[k].cost + v);
      }
      cur[j] = best;
    }
  }
  return g;
}

/// Greedy feedback from an HJB grid: the sampled control minimizing step cost
/// plus interpolated value at the next time slice; ties go to smaller |u|.
inline Policy greedy_policy(const ControlProblem& problem, const ValueGrid& grid) {
  detail::require_scalar(problem);
  std::vector<std::size_t> order(grid.controls.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(grid.controls[a]) < std::abs(grid.controls[b]); });
  return [&problem, &grid, order](double t, std::span<const double> x) {
    const double s = std::clamp((t - grid.t0) / grid.dt(), 0.0, static_cast<double>(grid.nt));
    const auto i = std::min(static_cast<std::size_t>(s + 1e-9), grid.nt - 1);
    double best = std::numeric_limits<double>::infinity();
    double u_best = grid.controls[order.front()];
    for (std::size_t k : order) {
      const auto step = detail::augmented_rk4(problem, x[0], grid.controls[k], grid.dt());
      const double v = step.cost + grid.slice(i + 1, step.x);
      if (std::isinf(best) ? v < best : v < best - 1e-13 * (1.0 + std::abs(best))) {
        best = v;
        u_best = grid.controls[k];
      }
    }
    return std::vector<double>{u_best};
  };
}

// ---------------------------------------------------------------------------
// Scalar Riccati equation -P' = 2aP + q - P^2 b^2 / rho, P(T) = 0.

struct RiccatiSolution {
  double a = 1.0, b = 1.0, q = 10.0, rho = 1.0, T = 1.0;
  double t0 = 0.0;
  std::vector<double> t;
  std::vector<double> P;
  std::vector<double> dP;

  double rhs(double p) const { return -(2.0 * a * p + q - p * p * b * b / rho); }

  /// Cubic Hermite interpolation of P.
  double operator()(double time) const {
    const double h = t[1] - t[0];
    const double s = std::clamp((time - t0) / h, 0.0, static_cast<double>(t.size() - 1));
    const auto i = std::min(static_cast<std::size_t>(s), t.size() - 2);
    const double w = s - static_cast<double>(i);
    const double w2 = w * w, w3 = w2 * w;
    return (2 * w3 - 3 * w2 + 1) * P[i] + (w3 - 2 * w2 + w) * h * dP[i] + (-2 * w3 + 3 * w2) * P[i + 1] + (w3 - w2) * h * dP[i + 1];
  }
  double value(double time, double x) const { return (*this)(time)*x * x; }
  double feedback(double time, double x) const { return -(b / rho) * (*this)(time)*x; }
  /// Positive root of the stationary equation, an upper bound for P.
  double stationary_root() const {
    const double B = b * b / rho;
    return (a + std::sqrt(a * a + q * B)) / B;
  }
};

inline RiccatiSolution riccati_solve(double a = 1.0, double b = 1.0, double q = 10.0, double rho = 1.0, double T = 1.0, double h = 1e-4,
                                     double t0 = 0.0) {
  if (!(h > 0.0) || h > 1e-3) throw std::invalid_argument("Riccati step must lie in (0, 1e-3]");
  if (!(rho > 0.0) || !(T > t0)) throw std::invalid_argument("Riccati data need rho > 0 and T > t0");
  RiccatiSolution s{a, b, q, rho, T, t0, {}, {}, {}};
  const auto steps = static_cast<std::size_t>(std::ceil((T - t0) / h - 1e-9));
  const double dt = (T - t0) / static_cast<double>(steps);
  s.t.resize(steps + 1);
  s.P.resize(steps + 1);
  s.dP.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) s.t[k] = t0 + dt * static_cast<double>(k);
  double p = 0.0;
  s.P[steps] = p;
  // Integrate backwards in time: dP/ds = -rhs with s = T - t.
  for (std::size_t k = steps; k-- > 0;) {
    auto g = [&](double v) { return -s.rhs(v); };
    const double k1 = g(p), k2 = g(p + 0.5 * dt * k1), k3 = g(p + 0.5 * dt * k2), k4 = g(p + dt * k3);
    p += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    s.P[k] = p;
  }
  for (std::size_t k = 0; k <= steps; ++k) s.dP[k] = s.rhs(s.P[k]);
  return s;
}

inline Policy riccati_policy(const RiccatiSolution& r) {
  return [&r](double t, std::span<const double> x) { return std::vector<double>{r.feedback(t, x[0])}; };
}

/// Optimal trajectories from sampled initial states under an oracle policy.
inline std::vector<Trajectory> optimal_flow(const ControlProblem& problem, const Policy& policy, std::span<const double> x0_samples, double h,
                                            ControlHold hold = ControlHold::Stage) {
  std::vector<Trajectory> flow;
  flow.reserve(x0_samples.size());
  for (double x0 : x0_samples) flow.push_back(simulate(problem, policy, std::vector<double>{x0}, h, hold));
  return flow;
}

inline std::vector<Trajectory> optimal_flow(const ControlProblem& problem, const ValueGrid& grid, std::span<const double> x0_samples, double h) {
  return optimal_flow(problem, greedy_policy(problem, grid), x0_samples, h, ControlHold::Step);
}

inline std::vector<Trajectory> optimal_flow(const ControlProblem& problem, const RiccatiSolution& r, std::span<const double> x0_samples, double h) {
  return optimal_flow(problem, riccati_policy(r), x0_samples, h);
}

inline std::vector<double> uniform_samples(double lo, double hi, std::size_t count) {
  std::vector<double> s(count);
  for (std::size_t k = 0; k < count; ++k) s[k] = count == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
  return s;
}

/// CSV (t, x, v_star), every `stride`-th node on both axes.
inline void write_value_grid_csv(std::ostream& os, const ValueGrid& g, std::size_t stride = 1) {
  stride = std::max<std::size_t>(stride, 1);
  os << "t,x,v_star\n";
  char buf[96];
  auto idx = [&](std::size_t n) {
    std::vector<std::size_t> v;
    for (std::size_t k = 0; k <= n; k += stride) v.push_back(k);
    if (v.back() != n) v.push_back(n);
    return v;
  };
  for (std::size_t i : idx(g.nt))
    for (std::size_t j : idx(g.nx)) {
      std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", g.time(i), g.state(j), g.at(i, j));
      os << buf;
    }
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  const std::size_t n = tr.x.empty() ? 0 : tr.x.front().size();
  const std::size_t m = tr.u.empty() ? 0 : tr.u.front().size();
  os << "t";
  for (std::size_t i = 0; i < n; ++i) os << ",x" << i + 1;
  for (std::size_t j = 0; j < m; ++j) os << ",u" << j + 1;
  os << "\n";
  char buf[40];
  for (std::size_t k = 0; k < tr.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.12g", tr.t[k]);
    os << buf;
    for (double v : tr.x[k]) {
      std::snprintf(buf, sizeof buf, ",%.12g", v);
      os << buf;
    }
    for (double v : tr.u[k]) {
      std::snprintf(buf, sizeof buf, ",%.12g", v);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace occmom
