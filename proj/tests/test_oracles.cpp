#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "occmom/oracles.hpp"

using namespace occmom;

namespace {

ControlProblem exponential_growth() {
  return parse_problem(R"(n = 1
m = 1
T = 1
f1 = x1
l = 0
X1 = 0 5
U1 = -1 1
initial = dirac 1
)");
}

// Closed-form Riccati solution: with p1 > p2 the roots of P^2 - 2P - 10 = 0
// and s = T - t, (P - p1)/(P - p2) = (p1/p2) exp(-(p1 - p2) s).
double riccati_closed_form(double t) {
  const double p1 = 1 + std::sqrt(11.0), p2 = 1 - std::sqrt(11.0);
  const double k = p1 / p2 * std::exp(-(p1 - p2) * (1.0 - t));
  return (p1 - k * p2) / (1 - k);
}

// Turnpike value from (0, 0): u = 0 until x = 1 at t = ln 2, stay at (1, 2)
// until T - ln 2, then u = 0 up to x(T) = 3. Costs 1 - ln 2, 3(2 - 2 ln 2),
// 2 - ln 2.
const double kTurnpikeValue = 9.0 - 8.0 * std::log(2.0);

const ValueGrid& turnpike_grid() {
  static const ValueGrid g = hjb_grid_solve(builtin_turnpike());
  return g;
}

const ValueGrid& lqr_grid() {
  static const ValueGrid g = hjb_grid_solve(builtin_lqr(InitialMode::Dirac));
  return g;
}

}  // namespace

TEST(Simulate, ExponentialReachesE) {
  const Trajectory tr = simulate(exponential_growth(), constant_policy({0.0}), std::vector<double>{1.0}, 1e-3);
  EXPECT_NEAR(tr.x.back()[0], std::exp(1.0), 1e-9);
  EXPECT_DOUBLE_EQ(tr.t.back(), 1.0);
  EXPECT_EQ(tr.size(), 1001u);
}

TEST(Simulate, FourthOrderConvergence) {
  const ControlProblem p = exponential_growth();
  auto err = [&](double h) { return std::abs(simulate(p, constant_policy({0.0}), std::vector<double>{1.0}, h).x.back()[0] - std::exp(1.0)); };
  const double ratio = err(0.02) / err(0.01);
  EXPECT_GT(ratio, 14.0);
  EXPECT_LT(ratio, 18.0);
}

TEST(Simulate, FrozenStateCost) {
  const ControlProblem p = parse_problem(R"(n = 1
m = 1
t0 = 0.5
T = 2
f1 = 0
l = x1^2 + u1
l_T = 3*x1
X1 = -1 1
U1 = -1 1
initial = dirac 0.4
)");
  const Trajectory tr = simulate(p, constant_policy({0.5}), std::vector<double>{0.4}, 1e-2);
  for (const auto& x : tr.x) EXPECT_DOUBLE_EQ(x[0], 0.4);
  EXPECT_NEAR(tr.total_cost, 1.5 * (0.16 + 0.5) + 1.2, 1e-12);
  EXPECT_NEAR(tr.total_cost, tr.running_cost + tr.terminal_cost, 1e-15);
}

TEST(Simulate, TurnpikeWithFullControl) {
  const Trajectory tr = simulate(builtin_turnpike(), constant_policy({3.0}), std::vector<double>{0.0}, 1e-3);
  double worst = 0;
  for (std::size_t k = 0; k < tr.size(); ++k) worst = std::max(worst, std::abs(tr.x[k][0] - 0.5 * (1 - std::exp(-2 * tr.t[k]))));
  EXPECT_LE(worst, 1e-8);
  // cost = int x + 3 dt over [0, 2]
  const double exact = 0.5 * 2 - 0.25 * (1 - std::exp(-4.0)) + 6.0;
  EXPECT_NEAR(tr.total_cost, exact, 1e-8);
}

TEST(Simulate, Errors) {
  const ControlProblem p = exponential_growth();
  try {
    ControlProblem q = p;
    q.X.intervals[0].hi = 2.0;
    q.X_T.intervals[0].hi = 2.0;
    (void)simulate(q, constant_policy({0.0}), std::vector<double>{1.0}, 1e-3);
    FAIL() << "expected a state exit";
  } catch (const StateExitError& e) {
    EXPECT_NEAR(e.time(), std::log(2.0), 2e-3);
  }
  EXPECT_THROW(simulate(p, constant_policy({0.0}), std::vector<double>{1.0}, 0.2), std::invalid_argument);
  EXPECT_THROW(simulate(p, constant_policy({0.0, 1.0}), std::vector<double>{1.0}, 1e-2), std::invalid_argument);
  EXPECT_THROW(simulate(p, constant_policy({0.0}), std::vector<double>{1.0, 2.0}, 1e-2), std::invalid_argument);
}

TEST(HjbGrid, FrozenProblemKeepsTerminalCost) {
  const ControlProblem p = builtin_frozen();
  const ValueGrid g = hjb_grid_solve(p, 100, 50, 11);
  for (std::size_t i = 0; i <= g.nt; i += 5)
    for (std::size_t j = 0; j <= g.nx; ++j) EXPECT_NEAR(g.at(i, j), g.state(j) * g.state(j), 1e-14);
}

TEST(HjbGrid, TerminalSliceIsExact) {
  const ValueGrid& g = lqr_grid();
  for (std::size_t j = 0; j <= g.nx; ++j) EXPECT_EQ(g.at(g.nt, j), 0.0);
}

TEST(HjbGrid, RejectsCoarseGridsAndWrongShapes) {
  EXPECT_THROW(hjb_grid_solve(builtin_lqr(), 5, 100), std::invalid_argument);
  EXPECT_THROW(hjb_grid_solve(builtin_lqr(), 100, 9), std::invalid_argument);
  const ControlProblem two = parse_problem(R"(n = 2
m = 1
T = 1
f1 = x2
f2 = u1
l = x1^2
X1 = -1 1
X2 = -1 1
U1 = -1 1
initial = dirac 0 0
)");
  EXPECT_THROW(hjb_grid_solve(two, 20, 20), std::invalid_argument);
}

TEST(HjbGrid, AgreesWithRiccatiAwayFromTheBoundary) {
  const ValueGrid& g = lqr_grid();
  const RiccatiSolution r = riccati_solve();
  double worst = 0;
  for (std::size_t i = 0; i <= g.nt; i += 20)
    for (std::size_t j = 0; j <= g.nx; ++j) {
      const double x = g.state(j);
      if (std::abs(x) > 1.0) continue;
      worst = std::max(worst, std::abs(g.at(i, j) - r.value(g.time(i), x)));
    }
  EXPECT_LE(worst, 2e-3);
}

TEST(HjbGrid, TurnpikeValueAndTrajectoryShape) {
  const ControlProblem p = builtin_turnpike();
  const ValueGrid& g = turnpike_grid();
  EXPECT_NEAR(g(0.0, 0.0), kTurnpikeValue, 1e-3);
  const Trajectory tr = simulate(p, greedy_policy(p, g), std::vector<double>{0.0}, g.dt(), ControlHold::Step);
  EXPECT_NEAR(tr.total_cost, kTurnpikeValue, 1e-3);
  const std::size_t mid = tr.size() / 2;
  EXPECT_NEAR(tr.t[mid], 1.0, 1e-12);
  EXPECT_NEAR(tr.x[mid][0], 1.0, 5e-3);
  EXPECT_NEAR(tr.x.back()[0], 3.0, 1e-2);
  // Nondecreasing up to the grid resolution (the hold arc chatters below dx).
  for (std::size_t k = 1; k < tr.size(); ++k) EXPECT_GE(tr.x[k][0], tr.x[k - 1][0] - g.dx());
  // The flow stays clear of the upper box edge.
  EXPECT_LE(tr.x.back()[0], p.X.intervals[0].hi - 0.1);
}

// G(t) = v(t, x(t)) + int_0^t l ds is nondecreasing along any admissible path
// and flat along the extracted optimal one, up to the grid error.
TEST(HjbGrid, DynamicProgrammingConsistency) {
  const ControlProblem p = builtin_turnpike();
  const ValueGrid& g = turnpike_grid();
  auto G = [&](const Trajectory& tr) {
    std::vector<double> out(tr.size());
    double acc = 0;
    for (std::size_t k = 0; k < tr.size(); ++k) {
      if (k > 0) {
        const double a = p.l.evaluate(detail::point_of(tr.t[k - 1], tr.x[k - 1], tr.u[k - 1]));
        const double b = p.l.evaluate(detail::point_of(tr.t[k], tr.x[k], tr.u[k - 1]));  // control held over the step
        acc += 0.5 * (tr.t[k] - tr.t[k - 1]) * (a + b);
      }
      out[k] = g(tr.t[k], tr.x[k][0]) + acc;
    }
    return out;
  };
  const double grid_err = std::abs(g(0.0, 0.0) - kTurnpikeValue) + 1e-4;
  const Trajectory other = simulate(p, constant_policy({1.5}), std::vector<double>{0.0}, 1e-3);
  const auto Go = G(other);
  for (std::size_t k = 100; k < Go.size(); k += 100) EXPECT_GE(Go[k], Go[k - 100] - 2 * grid_err) << k;

  const Trajectory best = simulate(p, greedy_policy(p, g), std::vector<double>{0.0}, g.dt(), ControlHold::Step);
  const auto Gb = G(best);
  for (double v : Gb) EXPECT_NEAR(v, Gb.front(), 2 * grid_err + 2e-3);
}

TEST(Riccati, TerminalConditionBoundsAndClosedForm) {
  const RiccatiSolution r = riccati_solve();
  EXPECT_EQ(r(1.0), 0.0);
  EXPECT_NEAR(r.stationary_root(), 1 + std::sqrt(11.0), 1e-14);
  for (double t = 0; t <= 1.0; t += 0.01) {
    EXPECT_GE(r(t), 0.0);
    EXPECT_LE(r(t), r.stationary_root());
    EXPECT_NEAR(r(t), riccati_closed_form(t), 1e-9) << t;
  }
  EXPECT_NEAR(r(0.0) / 3.0, riccati_closed_form(0.0) / 3.0, 1e-10);
  EXPECT_THROW(riccati_solve(1, 1, 10, 1, 1, 1e-2), std::invalid_argument);
}

TEST(Riccati, ClosedLoopCostMatchesValue) {
  const ControlProblem p = builtin_lqr(InitialMode::Dirac);
  const RiccatiSolution r = riccati_solve();
  for (double x0 : {0.5, -0.8, 1.0}) {
    const Trajectory tr = simulate(p, riccati_policy(r), std::vector<double>{x0}, 1e-3);
    EXPECT_NEAR(tr.total_cost, r(0.0) * x0 * x0, 1e-4) << x0;
  }
}

TEST(OptimalFlow, LqrSymmetryAndOrigin) {
  const ControlProblem p = builtin_lqr();
  const RiccatiSolution r = riccati_solve();
  const auto xs = uniform_samples(-0.7, 0.7, 3);
  ASSERT_EQ(xs.size(), 3u);
  EXPECT_DOUBLE_EQ(xs[1], 0.0);
  const auto flow = optimal_flow(p, r, xs, 1e-3);
  for (std::size_t k = 0; k < flow[1].size(); ++k) EXPECT_EQ(flow[1].x[k][0], 0.0);
  EXPECT_EQ(flow[1].total_cost, 0.0);
  for (std::size_t k = 0; k < flow[0].size(); ++k) EXPECT_NEAR(flow[0].x[k][0], -flow[2].x[k][0], 1e-15);
  EXPECT_NEAR(flow[0].total_cost, flow[2].total_cost, 1e-14);
}

TEST(OptimalFlow, GreedyFlowFromGrid) {
  const ControlProblem p = builtin_lqr();
  const auto flow = optimal_flow(p, lqr_grid(), uniform_samples(-1, 1, 5), lqr_grid().dt());
  const RiccatiSolution r = riccati_solve();
  for (const auto& tr : flow) EXPECT_NEAR(tr.total_cost, r.value(0.0, tr.x.front()[0]), 5e-3);
}

TEST(Csv, Headers) {
  std::ostringstream a, b;
  write_value_grid_csv(a, hjb_grid_solve(builtin_frozen(), 10, 10, 3), 5);
  const std::string grid = a.str();
  EXPECT_EQ(grid.substr(0, grid.find('\n')), "t,x,v_star");
  EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 1 + 3 * 3);
  write_trajectory_csv(b, simulate(builtin_frozen(), constant_policy({0.0}), std::vector<double>{0.5}, 0.1));
  EXPECT_EQ(b.str().substr(0, b.str().find('\n')), "t,x1,u1");
}
