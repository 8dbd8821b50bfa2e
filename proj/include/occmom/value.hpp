#pragma once

// Value-function lower bounds from the relaxation's equality multipliers:
// extraction, grid verification of the dual constraints, and gap reports
// against an oracle.

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

#include "occmom/oracles.hpp"
#include "occmom/poly.hpp"
#include "occmom/problem.hpp"
#include "occmom/relax.hpp"
#include "occmom/sdp.hpp"

namespace occmom {

/// Flat evaluator for repeated evaluation on grids.
class CompiledPolynomial {
 public:
  CompiledPolynomial() = default;
  explicit CompiledPolynomial(const Polynomial& p) : vars_(p.space().size()) {
    for (const auto& [m, c] : p.terms()) {
      coeffs_.push_back(c);
      exps_.insert(exps_.end(), m.exponents().begin(), m.exponents().end());
      for (std::size_t k = 0; k < vars_; ++k) max_exp_ = std::max(max_exp_, m[k]);
    }
  }

  double operator()(std::span<const double> point) const {
    thread_local std::vector<double> pw;
    const std::size_t stride = max_exp_ + 1;
    pw.resize(vars_ * stride);
    for (std::size_t k = 0; k < vars_; ++k) {
      double v = 1.0;
      for (unsigned e = 0; e <= max_exp_; ++e) {
        pw[k * stride + e] = v;
        v *= point[k];
      }
    }
    double s = 0.0;
    for (std::size_t t = 0; t < coeffs_.size(); ++t) {
      double term = coeffs_[t];
      const unsigned* e = &exps_[t * vars_];
      for (std::size_t k = 0; k < vars_; ++k)
        if (e[k]) term *= pw[k * stride + e[k]];
      s += term;
    }
    return s;
  }

 private:
  std::size_t vars_ = 0;
  unsigned max_exp_ = 0;
  std::vector<double> coeffs_;
  std::vector<unsigned> exps_;
};

struct FeasibilityReport {
  std::size_t density = 0;
  double running_min = std::numeric_limits<double>::infinity();    // min of l + Lv
  double terminal_min = std::numeric_limits<double>::infinity();   // min of l_T - v(T, .)
  std::vector<double> running_argmin;                               // (t, x, u)
  std::vector<double> terminal_argmin;                              // (T, x)
  double feas_tol = 1e-6;

  bool feasible() const { return running_min >= -feas_tol && terminal_min >= -feas_tol; }
};

struct ValueBound {
  std::string problem;
  unsigned order = 0;
  Polynomial v;         // original coordinates, no controls
  Polynomial v_scaled;  // same function in scaled coordinates
  double dual_objective = 0.0;
  // Margin shift already applied: v <- v - terminal_margin - running_margin * (T - t).
  double terminal_margin = 0.0;
  double running_margin = 0.0;
  FeasibilityReport feasibility;

  double operator()(double t, std::span<const double> x) const {
    std::vector<double> p(v.space().size(), 0.0);
    p[0] = t;
    std::copy(x.begin(), x.end(), p.begin() + 1);
    return v.evaluate(p);
  }
};

/// v_scaled = sum over Liouville rows of lambda_row * test monomial, pulled back
/// to original coordinates.
inline ValueBound extract_value_polynomial(const ConicSolution& solution, const MomentRelaxation& relaxation, const ScaledProblem& problem) {
  if (solution.status != SolveStatus::Optimal && solution.status != SolveStatus::SlowProgress)
    throw std::invalid_argument(std::string("cannot extract a bound from a solve with status ") + to_string(solution.status));
  if (static_cast<std::size_t>(solution.multipliers.size()) != relaxation.equalities.size())
    throw std::invalid_argument("multipliers do not match the relaxation's equalities");
  const VariableSpace& sp = relaxation.space;
  ValueBound b;
  b.problem = problem.original.name;
  b.order = relaxation.order;
  b.v_scaled = Polynomial(sp);
  for (std::size_t e = 0; e < relaxation.equalities.size(); ++e) {
    const Monomial& m = relaxation.equalities[e].test;
    if (m.size() != sp.size()) throw std::invalid_argument("equality is missing its test monomial");
    b.v_scaled.add_term(m, solution.multipliers(static_cast<Eigen::Index>(e)));
  }
  b.v = problem.from_scaled(b.v_scaled);
  b.dual_objective = solution.dual_objective;
  return b;
}

namespace detail {

/// Calls fn(point) over the uniform grid with `density` nodes per listed axis;
/// other coordinates are held at their value in `base`.
inline void for_each_grid_point(std::vector<double> base, std::span<const std::size_t> axes, std::span<const Interval> ranges, std::size_t density,
                                const std::function<void(const std::vector<double>&)>& fn) {
  std::vector<std::size_t> idx(axes.size(), 0);
  for (;;) {
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const Interval& r = ranges[a];
      base[axes[a]] = r.lo + (r.hi - r.lo) * static_cast<double>(idx[a]) / static_cast<double>(density - 1);
    }
    fn(base);
    std::size_t a = 0;
    while (a < axes.size() && ++idx[a] == density) idx[a++] = 0;
    if (a == axes.size()) break;
  }
}

}  // namespace detail

/// Evaluate l + Lv on a uniform grid over [t0,T] x X x U and l_T - v(T, .) over X_T.
inline FeasibilityReport verify_dual_feasibility(const ValueBound& bound, const ControlProblem& problem, std::size_t density = 41, double feas_tol = 1e-6) {
  if (density < 2) throw std::invalid_argument("verification grid needs at least 2 points per axis");
  const VariableSpace& sp = problem.space;
  FeasibilityReport rep;
  rep.density = density;
  rep.feas_tol = feas_tol;

  const CompiledPolynomial running(problem.l + apply_generator(bound.v, problem.f));
  std::vector<std::size_t> axes{VariableSpace::time()};
  std::vector<Interval> ranges{{problem.t0(), problem.T}};
  for (std::size_t i = 0; i < sp.n_state(); ++i) {
    axes.push_back(sp.state(i));
    ranges.push_back(problem.X.intervals[i]);
  }
  for (std::size_t j = 0; j < sp.m_control(); ++j) {
    axes.push_back(sp.control(j));
    ranges.push_back(problem.U.intervals[j]);
  }
  detail::for_each_grid_point(std::vector<double>(sp.size(), 0.0), axes, ranges, density, [&](const std::vector<double>& p) {
    const double r = running(p);
    if (r < rep.running_min) {
      rep.running_min = r;
      rep.running_argmin = p;
    }
  });

  const CompiledPolynomial terminal(problem.l_T - bound.v);
  std::vector<std::size_t> taxes;
  std::vector<Interval> tranges;
  for (std::size_t i = 0; i < sp.n_state(); ++i) {
    taxes.push_back(sp.state(i));
    tranges.push_back(problem.X_T.intervals[i]);
  }
  std::vector<double> base(sp.size(), 0.0);
  base[0] = problem.T;
  detail::for_each_grid_point(base, taxes, tranges, density, [&](const std::vector<double>& p) {
    const double r = terminal(p);
    if (r < rep.terminal_min) {
      rep.terminal_min = r;
      rep.terminal_argmin.assign(p.begin(), p.begin() + 1 + static_cast<std::ptrdiff_t>(sp.n_state()));
    }
  });
  return rep;
}

/// Shift v down so that both grid minima become nonnegative. A constant shift
/// only helps the terminal constraint; the running constraint l + Lv needs a
/// term affine in time, c_L (T - t), whose generator contributes +c_L.
inline void apply_margin_shift(ValueBound& bound, const ScaledProblem& problem, std::size_t density = 41, double feas_tol = 1e-6) {
  const ControlProblem& p = problem.original;
  const FeasibilityReport pre = verify_dual_feasibility(bound, p, density, feas_tol);
  bound.terminal_margin = std::max(0.0, -pre.terminal_min) + 1e-8;
  bound.running_margin = std::max(0.0, -pre.running_min) + 1e-8;
  const VariableSpace& sp = bound.v.space();
  const Polynomial t = Polynomial::variable(sp, VariableSpace::time());
  bound.v -= Polynomial::constant(sp, bound.terminal_margin) + bound.running_margin * (Polynomial::constant(sp, p.T) - t);
  bound.v_scaled -= Polynomial::constant(sp, bound.terminal_margin) +
                    (bound.running_margin * problem.horizon) * (Polynomial::constant(sp, 1.0) - t);
  bound.feasibility = verify_dual_feasibility(bound, p, density, feas_tol);
}

/// Pairing <v, mu_0> with the problem's initial measure.
inline double initial_pairing(const ValueBound& bound, const ControlProblem& problem) {
  std::vector<Monomial> basis;
  std::vector<double> coeffs;
  for (const auto& [m, c] : bound.v.terms()) {
    basis.push_back(m);
    coeffs.push_back(c);
  }
  const auto mom = initial_moments(problem, basis);
  double s = 0.0;
  for (std::size_t k = 0; k < mom.size(); ++k) s += coeffs[k] * mom[k];
  return s;
}

// ---------------------------------------------------------------------------
// Gap reports.

struct GapSeries {
  unsigned order = 0;
  std::vector<double> v_k;
  std::vector<double> gap;  // v* - v_k
  double min_gap = std::numeric_limits<double>::infinity();
  double max_increase = 0.0;  // largest gap(t_k) - min_{j<k} gap(t_j)
  bool nonnegative = true;
  bool nonincreasing = true;
};

struct GapReport {
  std::vector<double> t;
  std::vector<std::vector<double>> x;
  std::vector<double> v_star;
  std::vector<GapSeries> series;
  double oracle_tol = 1e-3;

  bool ok() const {
    return std::all_of(series.begin(), series.end(), [](const GapSeries& s) { return s.nonnegative && s.nonincreasing; });
  }
};

inline GapReport trajectory_gap(std::span<const ValueBound> bounds, const Trajectory& trajectory, std::span<const double> oracle_values,
                                double oracle_tol = 1e-3) {
  if (oracle_values.size() != trajectory.size()) throw std::invalid_argument("oracle values and trajectory are on different time grids");
  GapReport rep;
  rep.t = trajectory.t;
  rep.x = trajectory.x;
  rep.v_star.assign(oracle_values.begin(), oracle_values.end());
  rep.oracle_tol = oracle_tol;
  for (const ValueBound& b : bounds) {
    const CompiledPolynomial v(b.v);
    GapSeries s;
    s.order = b.order;
    double running_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < trajectory.size(); ++k) {
      std::vector<double> p(b.v.space().size(), 0.0);
      p[0] = trajectory.t[k];
      std::copy(trajectory.x[k].begin(), trajectory.x[k].end(), p.begin() + 1);
      const double vk = v(p);
      const double g = oracle_values[k] - vk;
      s.v_k.push_back(vk);
      s.gap.push_back(g);
      s.min_gap = std::min(s.min_gap, g);
      if (k > 0) s.max_increase = std::max(s.max_increase, g - running_min);
      running_min = std::min(running_min, g);
    }
    s.nonnegative = s.min_gap >= -oracle_tol;
    s.nonincreasing = s.max_increase <= oracle_tol;
    rep.series.push_back(std::move(s));
  }
  return rep;
}

struct GridSpec {
  double t0 = 0.0, T = 1.0;
  double x_lo = -1.0, x_hi = 1.0;
  std::size_t nt = 100, nx = 100;  // intervals

  double time(std::size_t i) const { return t0 + (T - t0) * static_cast<double>(i) / static_cast<double>(nt); }
  double state(std::size_t j) const { return x_lo + (x_hi - x_lo) * static_cast<double>(j) / static_cast<double>(nx); }
  double dx() const { return (x_hi - x_lo) / static_cast<double>(nx); }
};

struct GapMap {
  GridSpec grid;
  unsigned order = 0;
  std::vector<double> gap;       // row-major by time, (nt+1) x (nx+1)
  std::vector<double> log10gap;  // clamped below at -12
  std::vector<char> in_mask;
  double mean_inside = 0.0;
  double mean_outside = 0.0;
  std::size_t count_inside = 0;
  std::size_t count_outside = 0;
  double min_gap = std::numeric_limits<double>::infinity();
};

/// State interval covered by a one-dimensional flow at time t.
inline Interval flow_extent(std::span<const Trajectory> flow, double t) {
  Interval r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Trajectory& tr : flow) {
    if (tr.size() < 2) continue;
    const double h = tr.t[1] - tr.t[0];
    const double s = std::clamp((t - tr.t.front()) / h, 0.0, static_cast<double>(tr.size() - 1));
    const auto k = std::min(static_cast<std::size_t>(s), tr.size() - 2);
    const double w = s - static_cast<double>(k);
    const double x = (1.0 - w) * tr.x[k][0] + w * tr.x[k + 1][0];
    r.lo = std::min(r.lo, x);
    r.hi = std::max(r.hi, x);
  }
  return r;
}

/// log10 gap over a (t, x) grid and the mask of cells within delta_cells of the flow.
inline GapMap support_gap_map(const ValueBound& bound, const std::function<double(double, double)>& oracle, const GridSpec& grid,
                              std::span<const Trajectory> flow, double delta_cells = 2.0) {
  if (bound.v.space().n_state() != 1) throw std::invalid_argument("gap maps are one-dimensional");
  GapMap m;
  m.grid = grid;
  m.order = bound.order;
  const CompiledPolynomial v(bound.v);
  const double delta = delta_cells * grid.dx();
  double sum_in = 0.0, sum_out = 0.0;
  std::vector<double> p(bound.v.space().size(), 0.0);
  for (std::size_t i = 0; i <= grid.nt; ++i) {
    const double t = grid.time(i);
    const Interval ext = flow_extent(flow, t);
    for (std::size_t j = 0; j <= grid.nx; ++j) {
      const double x = grid.state(j);
      p[0] = t;
      p[1] = x;
      const double g = oracle(t, x) - v(p);
      const bool inside = x >= ext.lo - delta && x <= ext.hi + delta;
      m.gap.push_back(g);
      m.log10gap.push_back(std::max(-12.0, std::log10(std::max(g, 1e-300))));
      m.in_mask.push_back(inside ? 1 : 0);
      m.min_gap = std::min(m.min_gap, g);
      if (inside) {
        sum_in += g;
        ++m.count_inside;
      } else {
        sum_out += g;
        ++m.count_outside;
      }
    }
  }
  m.mean_inside = m.count_inside ? sum_in / static_cast<double>(m.count_inside) : 0.0;
  m.mean_outside = m.count_outside ? sum_out / static_cast<double>(m.count_outside) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// CSV writers (12 significant digits).

namespace detail {
inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}
}  // namespace detail

inline void write_gap_trajectory_csv(std::ostream& os, const GapReport& rep, bool header = true) {
  const std::size_t n = rep.x.empty() ? 0 : rep.x.front().size();
  if (header) {
    os << "order,t";
    for (std::size_t i = 0; i < n; ++i) os << ",x" << i + 1;
    os << ",v_star,v_k,gap\n";
  }
  for (const GapSeries& s : rep.series)
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
      os << s.order << ',' << detail::csv_number(rep.t[k]);
      for (double xi : rep.x[k]) os << ',' << detail::csv_number(xi);
      os << ',' << detail::csv_number(rep.v_star[k]) << ',' << detail::csv_number(s.v_k[k]) << ',' << detail::csv_number(s.gap[k]) << '\n';
    }
}

inline void write_gap_grid_csv(std::ostream& os, const GapMap& m, bool header = true) {
  if (header) os << "order,t,x,log10gap,in_mask\n";
  std::size_t k = 0;
  for (std::size_t i = 0; i <= m.grid.nt; ++i)
    for (std::size_t j = 0; j <= m.grid.nx; ++j, ++k)
      os << m.order << ',' << detail::csv_number(m.grid.time(i)) << ',' << detail::csv_number(m.grid.state(j)) << ','
         << detail::csv_number(m.log10gap[k]) << ',' << static_cast<int>(m.in_mask[k]) << '\n';
}

}  // namespace occmom
