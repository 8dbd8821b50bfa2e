#pragma once

// Hierarchy sweep and report emission behind the command-line tool.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "occmom/oracles.hpp"
#include "occmom/problem.hpp"
#include "occmom/relax.hpp"
#include "occmom/sdp.hpp"
#include "occmom/value.hpp"

namespace occmom {

inline constexpr const char* kToolVersion = "occmom 1.0.0";

struct RunConfig {
  std::string builtin;       // turnpike | lqr | frozen
  std::string problem_path;  // alternative to builtin
  InitialMode mode = InitialMode::Dirac;
  unsigned r_min = 2, r_max = 4;
  double tol = 1e-8;
  std::size_t grid = 2000;          // oracle nodes per axis (nx = nt)
  std::size_t verify_density = 41;  // feasibility grid per axis
  std::string out = "out";
  std::uint64_t seed = 0;  // echoed only: every sample in the pipeline is deterministic

  void validate() const {
    if (builtin.empty() == problem_path.empty()) throw std::invalid_argument("give exactly one of a builtin name or a problem file");
    if (r_min < 1) throw std::invalid_argument("orders start at 1");
    if (r_max < r_min) throw std::invalid_argument("order range is empty");
    if (grid < 10) throw std::invalid_argument("oracle grid needs at least 10 nodes per axis");
    if (verify_density < 2) throw std::invalid_argument("verification grid needs at least 2 points per axis");
  }

  ControlProblem load() const {
    if (!builtin.empty()) return builtin_problem(builtin, mode);
    return load_problem(problem_path);
  }
};

inline const char* to_string(InitialMode m) { return m == InitialMode::Dirac ? "dirac" : "averaged"; }

struct OrderRecord {
  unsigned order = 0;
  std::size_t variables = 0, equalities = 0;
  std::vector<std::size_t> block_sizes;
  SolveStatus status = SolveStatus::IterationLimit;
  int iterations = 0;
  double primal = 0.0, dual = 0.0;
  double max_residual = 0.0;
  double seconds = 0.0;
  bool has_bound = false;
  double v_initial = 0.0;
  bool feasible = false;
  double running_margin = 0.0, terminal_margin = 0.0;
  std::string error;
};

struct RunManifest {
  RunConfig config;
  std::string command;
  std::string problem;
  std::vector<OrderRecord> orders;
  std::vector<std::string> files;
  std::vector<std::string> notes;
  bool success = false;

  void write(const std::filesystem::path& dir) const {
    std::ofstream os(dir / "manifest.txt");
    os << "tool = " << kToolVersion << "\n";
    os << "command = " << command << "\n";
    os << "problem = " << problem << "\n";
    os << "source = " << (config.builtin.empty() ? config.problem_path : "builtin:" + config.builtin) << "\n";
    os << "mode = " << to_string(config.mode) << "\n";
    os << "orders = " << config.r_min << ".." << config.r_max << "\n";
    os << "tol = " << detail::csv_number(config.tol) << "\n";
    os << "grid = " << config.grid << "\n";
    os << "verify_density = " << config.verify_density << "\n";
    os << "seed = " << config.seed << "\n";
    for (const auto& r : orders) {
      const std::string k = "order." + std::to_string(r.order) + ".";
      if (!r.error.empty()) {
        os << k << "error = " << r.error << "\n";
        continue;
      }
      os << k << "variables = " << r.variables << "\n";
      os << k << "equalities = " << r.equalities << "\n";
      os << k << "blocks = ";
      for (std::size_t b = 0; b < r.block_sizes.size(); ++b) os << (b ? " " : "") << r.block_sizes[b];
      os << "\n";
      os << k << "status = " << to_string(r.status) << "\n";
      os << k << "iterations = " << r.iterations << "\n";
      os << k << "primal = " << detail::csv_number(r.primal) << "\n";
      os << k << "dual = " << detail::csv_number(r.dual) << "\n";
      os << k << "max_residual = " << detail::csv_number(r.max_residual) << "\n";
      os << k << "seconds = " << detail::csv_number(r.seconds) << "\n";
    }
    for (const auto& n : notes) os << "note = " << n << "\n";
    for (const auto& f : files) os << "file = " << f << "\n";
    os << "success = " << (success ? "true" : "false") << "\n";
  }
};

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& name, RunManifest& manifest) {
  std::ofstream os(dir / name);
  if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
  manifest.files.push_back(name);
  return os;
}

/// Oracle for a one-dimensional problem: Riccati for the builtin LQR, HJB grid otherwise.
struct Oracle {
  ValueGrid grid;
  RiccatiSolution riccati;
  bool use_riccati = false;

  double operator()(double t, double x) const { return use_riccati ? riccati.value(t, x) : grid(t, x); }
  Policy policy(const ControlProblem& p) const { return use_riccati ? riccati_policy(riccati) : greedy_policy(p, grid); }
  ControlHold hold() const { return use_riccati ? ControlHold::Stage : ControlHold::Step; }
};

inline Oracle make_oracle(const RunConfig& cfg, const ControlProblem& p) {
  Oracle o;
  if (cfg.builtin == "lqr") {
    o.use_riccati = true;
    o.riccati = riccati_solve(1.0, 1.0, 10.0, 1.0, p.T, 1e-4, p.t0());
  } else {
    o.grid = hjb_grid_solve(p, cfg.grid, cfg.grid);
  }
  return o;
}

inline double reference_state(const ControlProblem& p) {
  if (const auto* d = std::get_if<DiracInitial>(&p.initial)) return d->x0[0];
  return std::get<UniformInitial>(p.initial).box.intervals[0].hi;
}

}  // namespace detail

/// Sweep the orders, emit bounds and gap reports, and return the manifest.
inline RunManifest cmd_solve(const RunConfig& cfg) {
  cfg.validate();
  RunManifest man;
  man.config = cfg;
  man.command = "solve";
  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);

  try {
    const ControlProblem problem = cfg.load();
    man.problem = problem.name;
    const ScaledProblem scaled = scale(problem);
    SolverOptions opt;
    opt.tol = cfg.tol;

    std::vector<ValueBound> bounds;
    bool all_ok = true;
    for (unsigned r = cfg.r_min; r <= cfg.r_max; ++r) {
      OrderRecord rec;
      rec.order = r;
      const auto start = std::chrono::steady_clock::now();
      try {
        const MomentRelaxation rel = assemble(scaled, r);
        const ConicProgram prog = to_conic(rel);
        rec.variables = prog.num_vars;
        rec.equalities = rel.equalities.size();
        for (const auto& b : rel.blocks) rec.block_sizes.push_back(b.size);
        const ConicSolution sol = solve(prog, opt);
        rec.status = sol.status;
        rec.iterations = sol.iterations;
        rec.primal = sol.primal_objective;
        rec.dual = sol.dual_objective;
        rec.max_residual = sol.max_residual();
        if (sol.status == SolveStatus::Optimal || sol.status == SolveStatus::SlowProgress) {
          ValueBound b = extract_value_polynomial(sol, rel, scaled);
          apply_margin_shift(b, scaled, cfg.verify_density);
          rec.has_bound = true;
          rec.v_initial = initial_pairing(b, problem);
          rec.feasible = b.feasibility.feasible();
          rec.running_margin = b.running_margin;
          rec.terminal_margin = b.terminal_margin;
          bounds.push_back(std::move(b));
          if (sol.status == SolveStatus::SlowProgress) man.notes.push_back("order " + std::to_string(r) + " stopped with slow progress; best available bound used");
        } else {
          all_ok = false;
        }
      } catch (const std::exception& e) {
        rec.error = e.what();
        all_ok = false;
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      man.orders.push_back(std::move(rec));
    }

    {
      auto os = detail::open_output(dir, "bounds.csv", man);
      os << "order,status,primal_value,dual_value,v_initial,feasible,running_margin,terminal_margin\n";
      for (const auto& r : man.orders) {
        if (!r.error.empty()) continue;
        os << r.order << ',' << to_string(r.status) << ',' << detail::csv_number(r.primal) << ',' << detail::csv_number(r.dual) << ','
           << (r.has_bound ? detail::csv_number(r.v_initial) : "") << ',' << (r.has_bound ? (r.feasible ? "1" : "0") : "") << ','
           << (r.has_bound ? detail::csv_number(r.running_margin) : "") << ',' << (r.has_bound ? detail::csv_number(r.terminal_margin) : "") << '\n';
      }
    }

    if (problem.space.n_state() == 1 && problem.space.m_control() == 1) {
      const detail::Oracle oracle = detail::make_oracle(cfg, problem);
      const double x0 = detail::reference_state(problem);
      const Trajectory tr = simulate(problem, oracle.policy(problem), std::vector<double>{x0}, (problem.T - problem.t0()) / 2000.0, oracle.hold());
      {
        auto os = detail::open_output(dir, "trajectory.csv", man);
        write_trajectory_csv(os, tr);
      }
      std::vector<double> vstar;
      for (std::size_t k = 0; k < tr.size(); ++k) vstar.push_back(oracle(tr.t[k], tr.x[k][0]));
      {
        auto os = detail::open_output(dir, "gap_trajectory.csv", man);
        write_gap_trajectory_csv(os, trajectory_gap(bounds, tr, vstar));
      }
      if (const auto* u = std::get_if<UniformInitial>(&problem.initial)) {
        const Interval& X0 = u->box.intervals[0];
        const auto samples = uniform_samples(X0.lo, X0.hi, 41);
        const auto flow = optimal_flow(problem, oracle.policy(problem), samples, (problem.T - problem.t0()) / 1000.0, oracle.hold());
        const GridSpec gs{problem.t0(), problem.T, problem.X.intervals[0].lo, problem.X.intervals[0].hi, 100, 120};
        auto os = detail::open_output(dir, "gap_grid.csv", man);
        bool header = true;
        for (const auto& b : bounds) {
          write_gap_grid_csv(os, support_gap_map(b, [&](double t, double x) { return oracle(t, x); }, gs, flow), header);
          header = false;
        }
      }
    } else {
      man.notes.push_back("oracle reports need one state and one control; only bounds.csv written");
    }
    man.success = all_ok;
  } catch (const std::exception& e) {
    man.notes.push_back(std::string("error: ") + e.what());
    man.success = false;
  }
  man.write(dir);
  return man;
}

/// Write the SDP of every order in SDPA sparse format (standard form).
inline RunManifest cmd_export(const RunConfig& cfg) {
  cfg.validate();
  RunManifest man;
  man.config = cfg;
  man.command = "export";
  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  try {
    const ControlProblem problem = cfg.load();
    man.problem = problem.name;
    const ScaledProblem scaled = scale(problem);
    for (unsigned r = cfg.r_min; r <= cfg.r_max; ++r) {
      OrderRecord rec;
      rec.order = r;
      const MomentRelaxation rel = assemble(scaled, r);
      const ConicProgram prog = to_conic(rel);
      rec.variables = prog.num_vars;
      rec.equalities = rel.equalities.size();
      for (const auto& b : rel.blocks) rec.block_sizes.push_back(b.size);
      auto os = detail::open_output(dir, problem.name + "_r" + std::to_string(r) + ".dat-s", man);
      os << export_sdpa(prog);
      man.orders.push_back(std::move(rec));
    }
    man.success = true;
  } catch (const std::exception& e) {
    man.notes.push_back(std::string("error: ") + e.what());
  }
  man.write(dir);
  return man;
}

/// Oracle value grid and optimal flow for a builtin problem.
inline RunManifest cmd_oracle(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.builtin.empty()) throw std::invalid_argument("the oracle command needs a builtin problem");
  RunManifest man;
  man.config = cfg;
  man.command = "oracle";
  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  try {
    const ControlProblem problem = cfg.load();
    man.problem = problem.name;
    const ValueGrid grid = hjb_grid_solve(problem, cfg.grid, cfg.grid);
    {
      auto os = detail::open_output(dir, "oracle_grid.csv", man);
      write_value_grid_csv(os, grid, std::max<std::size_t>(1, cfg.grid / 200));
    }
    const detail::Oracle oracle = detail::make_oracle(cfg, problem);
    if (oracle.use_riccati) {
      auto os = detail::open_output(dir, "riccati.csv", man);
      os << "t,P\n";
      for (std::size_t k = 0; k < oracle.riccati.t.size(); k += 10)
        os << detail::csv_number(oracle.riccati.t[k]) << ',' << detail::csv_number(oracle.riccati.P[k]) << '\n';
    }
    const double h = (problem.T - problem.t0()) / 2000.0;
    {
      const Trajectory tr = simulate(problem, oracle.policy(problem), std::vector<double>{detail::reference_state(problem)}, h, oracle.hold());
      auto os = detail::open_output(dir, "trajectory.csv", man);
      write_trajectory_csv(os, tr);
    }
    std::vector<double> samples;
    if (const auto* u = std::get_if<UniformInitial>(&problem.initial))
      samples = uniform_samples(u->box.intervals[0].lo, u->box.intervals[0].hi, 21);
    else
      samples = {detail::reference_state(problem)};
    const auto flow = optimal_flow(problem, oracle.policy(problem), samples, h, oracle.hold());
    {
      auto os = detail::open_output(dir, "flow.csv", man);
      os << "x0,t,x1,u1\n";
      for (std::size_t s = 0; s < flow.size(); ++s)
        for (std::size_t k = 0; k < flow[s].size(); k += 10)
          os << detail::csv_number(samples[s]) << ',' << detail::csv_number(flow[s].t[k]) << ',' << detail::csv_number(flow[s].x[k][0]) << ','
             << detail::csv_number(flow[s].u[k][0]) << '\n';
    }
    man.success = true;
  } catch (const std::exception& e) {
    man.notes.push_back(std::string("error: ") + e.what());
  }
  man.write(dir);
  return man;
}

}  // namespace occmom
