#pragma once

// Dense primal-dual interior-point solver for small semidefinite programs
//
//   minimize    c'y + offset
//   subject to  A y = b
//               F_j(y) = F_j0 + sum_i y_i F_ji  >= 0   (PSD, or diagonal >= 0)
//
// Equalities are eliminated first (y = y_p + N z with N an orthonormal null-space
// basis of A, rank-deficient rows dropped), then the reduced LMI is solved as the
// dual of a standard-form pair with Nesterov-Todd scaling and Mehrotra
// predictor-corrector steps. Multipliers of the equalities are recovered from the
// PSD multipliers by least squares.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace occmom {

inline constexpr std::size_t kConstantTerm = static_cast<std::size_t>(-1);

/// One coefficient of a block: variable `var` (or kConstantTerm) at (row, col), row <= col.
struct BlockEntry {
  std::size_t var = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

struct ConeBlock {
  std::size_t size = 0;
  bool diagonal = false;  // nonnegative orthant of dimension `size`
  std::vector<BlockEntry> entries;
};

struct ConicProgram {
  std::size_t num_vars = 0;
  Eigen::VectorXd c;
  double objective_offset = 0.0;
  Eigen::MatrixXd A;  // rows = equalities
  Eigen::VectorXd b;
  std::vector<ConeBlock> blocks;

  std::size_t num_equalities() const { return static_cast<std::size_t>(A.rows()); }

  /// Throws std::invalid_argument on structural errors.
  void validate() const {
    const auto nv = static_cast<Eigen::Index>(num_vars);
    if (c.size() != nv) throw std::invalid_argument("objective length does not match variable count");
    if (A.rows() > 0 && A.cols() != nv) throw std::invalid_argument("equality matrix column count does not match variable count");
    if (A.rows() != b.size()) throw std::invalid_argument("equality rhs length does not match row count");
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      const auto& blk = blocks[j];
      if (blk.size == 0) throw std::invalid_argument("block " + std::to_string(j) + " has size 0");
      for (const auto& e : blk.entries) {
        if (e.var != kConstantTerm && e.var >= num_vars) throw std::invalid_argument("block entry references unknown variable");
        if (e.row > e.col || e.col >= blk.size) throw std::invalid_argument("block entry outside the upper triangle");
        if (blk.diagonal && e.row != e.col) throw std::invalid_argument("off-diagonal entry in a diagonal block");
      }
    }
  }

  /// Dense value of block j at y.
  Eigen::MatrixXd block_value(std::size_t j, const Eigen::VectorXd& y) const {
    const auto& blk = blocks[j];
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(blk.size, blk.size);
    for (const auto& e : blk.entries) {
      const double v = e.value * (e.var == kConstantTerm ? 1.0 : y[e.var]);
      M(e.row, e.col) += v;
      if (e.row != e.col) M(e.col, e.row) += v;
    }
    return M;
  }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, SlowProgress, IterationLimit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::SlowProgress: return "SlowProgress";
    case SolveStatus::IterationLimit: return "IterationLimit";
  }
  return "?";
}

struct ConicSolution {
  SolveStatus status = SolveStatus::IterationLimit;
  Eigen::VectorXd y;
  Eigen::VectorXd multipliers;         // one per equality row
  std::vector<bool> dropped_rows;      // rows removed as linearly dependent (multiplier 0)
  std::vector<Eigen::MatrixXd> dual_blocks;  // PSD multiplier per block
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_infeasibility = 0.0;  // relative ||Ay - b||, negative eigenvalues of F(y)
  double dual_infeasibility = 0.0;    // relative ||c - A'lambda - F*(Z)||
  double gap = 0.0;                   // |pobj - dobj| / (1 + |pobj| + |dobj|)
  int iterations = 0;

  double max_residual() const { return std::max({primal_infeasibility, dual_infeasibility, gap}); }
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iterations = 200;
  double step_fraction = 0.99;
  double rank_threshold = 1e-10;
  bool verbose = false;
};

namespace detail {

inline double min_eigenvalue(const Eigen::MatrixXd& M) {
  if (M.rows() == 0) return 0.0;
  if (M.rows() == 1) return M(0, 0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double max_eigenvalue(const Eigen::MatrixXd& M) {
  if (M.rows() == 0) return 0.0;
  if (M.rows() == 1) return M(0, 0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(M.rows() - 1);
}

/// Equality elimination and block reduction shared by the solver and the exporter.
struct ReducedProgram {
  Eigen::MatrixXd null_space;  // N x K
  Eigen::VectorXd particular;  // y_p
  std::vector<std::size_t> kept_rows;
  std::vector<bool> dropped_rows;
  Eigen::MatrixXd kept_q;  // N x rank, A_kept' = kept_q * kept_r
  Eigen::MatrixXd kept_r;
  bool inconsistent = false;

  struct Block {
    std::size_t source = 0;
    std::size_t n = 0;
    bool diagonal = false;
    Eigen::MatrixXd constant;   // G0 = F0 + sum_i y_p,i F_i
    Eigen::MatrixXd linear;     // n^2 x K, column k = vec(G_k)
  };
  std::vector<Block> blocks;          // blocks that depend on z
  std::vector<std::size_t> constant_blocks;
  bool constant_block_infeasible = false;
  bool unbounded_direction = false;  // a direction that moves no block but lowers the objective

  Eigen::VectorXd c;  // reduced objective N' c
  double objective_constant = 0.0;

  std::size_t num_vars() const { return static_cast<std::size_t>(null_space.cols()); }
};

inline ReducedProgram reduce(const ConicProgram& p, double rank_threshold, double feas_tol) {
  ReducedProgram r;
  const Eigen::Index N = static_cast<Eigen::Index>(p.num_vars);
  const Eigen::Index m = p.A.rows();
  r.dropped_rows.assign(static_cast<std::size_t>(m), false);
  if (m == 0) {
    r.null_space = Eigen::MatrixXd::Identity(N, N);
    r.particular = Eigen::VectorXd::Zero(N);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> piv(p.A.transpose());
    piv.setThreshold(rank_threshold);
    const Eigen::Index rank = piv.rank();
    for (Eigen::Index k = 0; k < rank; ++k) r.kept_rows.push_back(static_cast<std::size_t>(piv.colsPermutation().indices()(k)));
    std::sort(r.kept_rows.begin(), r.kept_rows.end());
    for (Eigen::Index i = 0; i < m; ++i) r.dropped_rows[static_cast<std::size_t>(i)] = true;
    for (auto i : r.kept_rows) r.dropped_rows[i] = false;

    Eigen::MatrixXd At(N, rank);
    Eigen::VectorXd bk(rank);
    for (Eigen::Index k = 0; k < rank; ++k) {
      At.col(k) = p.A.row(static_cast<Eigen::Index>(r.kept_rows[static_cast<std::size_t>(k)])).transpose();
      bk(k) = p.b(static_cast<Eigen::Index>(r.kept_rows[static_cast<std::size_t>(k)]));
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(At);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(N, N);
    r.kept_q = Q.leftCols(rank);
    r.kept_r = qr.matrixQR().topLeftCorner(rank, rank).triangularView<Eigen::Upper>();
    r.null_space = Q.rightCols(N - rank);
    // A_kept y = b_kept with A_kept = R' Q1'  =>  y_p = Q1 R^{-T} b_kept
    const Eigen::VectorXd w = r.kept_r.transpose().triangularView<Eigen::Lower>().solve(bk);
    r.particular = r.kept_q * w;
    const double res = (p.A * r.particular - p.b).lpNorm<Eigen::Infinity>();
    r.inconsistent = res > 1e-9 * (1.0 + p.b.lpNorm<Eigen::Infinity>());
  }

  const Eigen::Index K = r.null_space.cols();
  r.c = r.null_space.transpose() * p.c;
  r.objective_constant = p.c.dot(r.particular) + p.objective_offset;

  for (std::size_t j = 0; j < p.blocks.size(); ++j) {
    const auto& blk = p.blocks[j];
    const Eigen::Index n = static_cast<Eigen::Index>(blk.size);
    Eigen::MatrixXd G0 = Eigen::MatrixXd::Zero(n, n);
    std::vector<Eigen::Triplet<double>> trip;
    for (const auto& e : blk.entries) {
      const auto ri = static_cast<Eigen::Index>(e.row), ci = static_cast<Eigen::Index>(e.col);
      if (e.var == kConstantTerm) {
        G0(ri, ci) += e.value;
        if (ri != ci) G0(ci, ri) += e.value;
      } else {
        const auto v = static_cast<Eigen::Index>(e.var);
        trip.emplace_back(ri + ci * n, v, e.value);
        if (ri != ci) trip.emplace_back(ci + ri * n, v, e.value);
      }
    }
    Eigen::SparseMatrix<double> F(n * n, N);
    F.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd g0 = F * r.particular;
    G0 += Eigen::Map<const Eigen::MatrixXd>(g0.data(), n, n);
    Eigen::MatrixXd lin = F * r.null_space;
    const double scale = 1.0 + (lin.size() ? lin.cwiseAbs().maxCoeff() : 0.0);
    if (K == 0 || lin.cwiseAbs().maxCoeff() <= 1e-13 * scale) {
      r.constant_blocks.push_back(j);
      if (min_eigenvalue(G0) < -feas_tol * (1.0 + G0.norm())) r.constant_block_infeasible = true;
      continue;
    }
    r.blocks.push_back({j, static_cast<std::size_t>(n), blk.diagonal, std::move(G0), std::move(lin)});
  }

  // Directions of z that change no block leave the cone constraints untouched.
  // Along them the objective must be flat (else the program is unbounded) and
  // they are projected out so that the Schur complement stays nonsingular.
  if (K > 0 && !r.blocks.empty()) {
    Eigen::Index rows = 0;
    for (const auto& b : r.blocks) rows += b.linear.rows();
    Eigen::MatrixXd L(rows, K);
    Eigen::Index at = 0;
    for (const auto& b : r.blocks) {
      L.middleRows(at, b.linear.rows()) = b.linear;
      at += b.linear.rows();
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(L, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > rank_threshold * sv(0)) ++rank;
    if (rank < K) {
      Eigen::MatrixXd V = svd.matrixV();
      if (V.cols() < K) {  // thin V of a short L: complete the basis
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(V.leftCols(rank));
        V = qr.householderQ() * Eigen::MatrixXd::Identity(K, K);
      }
      const Eigen::MatrixXd range = V.leftCols(rank), flat = V.rightCols(K - rank);
      r.unbounded_direction = (flat.transpose() * r.c).lpNorm<Eigen::Infinity>() > feas_tol * (1.0 + p.c.lpNorm<Eigen::Infinity>());
      r.null_space = r.null_space * range;
      r.c = range.transpose() * r.c;
      for (auto& b : r.blocks) b.linear = b.linear * range;
    }
  }
  return r;
}

/// Standard-form pair solved internally:
///   (P) min <C,X>  s.t. <A_k,X> = b_k, X >= 0
///   (D) max b'z    s.t. S = C - sum_k z_k A_k >= 0
/// with C = G0, A_k = -G_k, b = -c_reduced; the user's PSD multipliers are X.
struct IpmBlock {
  std::size_t n = 0;
  Eigen::MatrixXd C;
  Eigen::MatrixXd A;  // n^2 x K
  std::size_t source = 0;
  std::size_t diag_pos = 0;  // position inside a diagonal source block
};

inline Eigen::MatrixXd reshape(const Eigen::VectorXd& v, Eigen::Index n) { return Eigen::Map<const Eigen::MatrixXd>(v.data(), n, n); }

inline Eigen::VectorXd vec(const Eigen::MatrixXd& M) { return Eigen::Map<const Eigen::VectorXd>(M.data(), M.size()); }

/// Largest alpha with X + alpha dX >= 0 (infinity if unbounded), X assumed PD.
inline double max_step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dX) {
  if (X.rows() == 1) return dX(0, 0) >= 0 ? std::numeric_limits<double>::infinity() : -X(0, 0) / dX(0, 0);
  Eigen::LLT<Eigen::MatrixXd> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  Eigen::MatrixXd W = llt.matrixL().solve(dX);
  W = llt.matrixL().solve(W.transpose()).transpose();
  W = 0.5 * (W + W.transpose()).eval();
  const double lmin = min_eigenvalue(W);
  return lmin >= 0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

inline Eigen::MatrixXd sym_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) { return 0.5 * (A * B + B * A); }

}  // namespace detail

/// Solve a ConicProgram. Structural errors throw; numerical outcomes are reported via status.
inline ConicSolution solve(const ConicProgram& program, const SolverOptions& opt = {}) {
  using Eigen::Index;
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  program.validate();
  if (!(opt.tol >= 1e-10 && opt.tol <= 1e-4)) throw std::invalid_argument("solver tolerance must lie in [1e-10, 1e-4]");

  const detail::ReducedProgram red = detail::reduce(program, opt.rank_threshold, opt.tol);
  const Index N = static_cast<Index>(program.num_vars);
  const Index K = static_cast<Index>(red.num_vars());

  ConicSolution sol;
  sol.dropped_rows = red.dropped_rows;
  sol.y = red.particular;
  sol.multipliers = VectorXd::Zero(program.A.rows());
  for (const auto& blk : program.blocks) sol.dual_blocks.push_back(MatrixXd::Zero(blk.size, blk.size));
  if (red.inconsistent || red.constant_block_infeasible) {
    sol.status = SolveStatus::Infeasible;
    sol.primal_objective = std::numeric_limits<double>::infinity();
    sol.dual_objective = std::numeric_limits<double>::infinity();
    return sol;
  }


  // Expand diagonal blocks into scalar cones.
  std::vector<detail::IpmBlock> blocks;
  for (const auto& rb : red.blocks) {
    const Index n = static_cast<Index>(rb.n);
    if (!rb.diagonal) {
      blocks.push_back({rb.n, rb.constant, -rb.linear, rb.source, 0});
      continue;
    }
    for (Index i = 0; i < n; ++i) {
      detail::IpmBlock s{1, rb.constant.block(i, i, 1, 1), -rb.linear.row(i + i * n), rb.source, static_cast<std::size_t>(i)};
      if (s.A.cwiseAbs().maxCoeff() > 0) {
        blocks.push_back(std::move(s));
      } else if (s.C(0, 0) < -opt.tol * (1.0 + std::abs(s.C(0, 0)))) {
        sol.status = SolveStatus::Infeasible;
        return sol;
      }
    }
  }
  const VectorXd b = -red.c;
  const double norm_c_user = program.c.lpNorm<Eigen::Infinity>();
  const double norm_b_user = program.b.size() ? program.b.lpNorm<Eigen::Infinity>() : 0.0;

  // User-level quantities from an internal point (z, X).
  auto assemble_user = [&](const VectorXd& z, const std::vector<MatrixXd>& X, ConicSolution& out) {
    out.y = red.particular + red.null_space * z;
    for (auto& D : out.dual_blocks) D.setZero();
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      MatrixXd& D = out.dual_blocks[blocks[j].source];
      if (blocks[j].n == 1 && program.blocks[blocks[j].source].diagonal) {
        D(blocks[j].diag_pos, blocks[j].diag_pos) = X[j](0, 0);
      } else {
        D = X[j];
      }
    }
    // F*(Z)_i = sum_j <F_ji, Z_j>
    VectorXd fstar = VectorXd::Zero(N);
    double const_part = 0.0;
    for (std::size_t j = 0; j < program.blocks.size(); ++j) {
      const MatrixXd& Z = out.dual_blocks[j];
      for (const auto& e : program.blocks[j].entries) {
        const double w = (e.row == e.col ? 1.0 : 2.0) * e.value * Z(e.row, e.col);
        if (e.var == kConstantTerm)
          const_part += w;
        else
          fstar(static_cast<Index>(e.var)) += w;
      }
    }
    const VectorXd resid = program.c - fstar;
    out.multipliers.setZero();
    VectorXd lambda_kept;
    if (!red.kept_rows.empty()) {
      lambda_kept = red.kept_r.triangularView<Eigen::Upper>().solve(red.kept_q.transpose() * resid);
      for (std::size_t k = 0; k < red.kept_rows.size(); ++k) out.multipliers(static_cast<Index>(red.kept_rows[k])) = lambda_kept(static_cast<Index>(k));
    }
    const VectorXd dual_res = resid - (program.A.rows() ? VectorXd(program.A.transpose() * out.multipliers) : VectorXd::Zero(N));
    out.primal_objective = program.c.dot(out.y) + program.objective_offset;
    out.dual_objective = (program.b.size() ? program.b.dot(out.multipliers) : 0.0) - const_part + program.objective_offset;
    double pinf = program.A.rows() ? (program.A * out.y - program.b).lpNorm<Eigen::Infinity>() / (1.0 + norm_b_user) : 0.0;
    for (std::size_t j = 0; j < program.blocks.size(); ++j) {
      const MatrixXd F = program.block_value(j, out.y);
      const double lmin = program.blocks[j].diagonal ? F.diagonal().minCoeff() : detail::min_eigenvalue(F);
      pinf = std::max(pinf, std::max(0.0, -lmin) / (1.0 + F.norm()));
    }
    out.primal_infeasibility = pinf;
    out.dual_infeasibility = dual_res.size() ? dual_res.lpNorm<Eigen::Infinity>() / (1.0 + norm_c_user) : 0.0;
    out.gap = std::abs(out.primal_objective - out.dual_objective) / (1.0 + std::abs(out.primal_objective) + std::abs(out.dual_objective));
  };

  if (K == 0 || blocks.empty()) {
    // Nothing left to optimize over (or no cone): y = y_p + N z with z free.
    if (K > 0 && red.c.norm() > opt.tol * (1.0 + norm_c_user)) {
      sol.status = SolveStatus::Unbounded;
      return sol;
    }
    assemble_user(VectorXd::Zero(K), {}, sol);
    sol.status = SolveStatus::Optimal;
    return sol;
  }

  std::size_t ntot = 0;
  for (const auto& blk : blocks) ntot += blk.n;

  // Starting point: scaled identities.
  std::vector<MatrixXd> X, S;
  VectorXd z = VectorXd::Zero(K);
  for (const auto& blk : blocks) {
    const double n = static_cast<double>(blk.n);
    double xi = std::max(10.0, std::sqrt(n)), eta = std::max(10.0, std::sqrt(n));
    double maxA = 0.0;
    for (Index k = 0; k < K; ++k) {
      const double na = blk.A.col(k).norm();
      maxA = std::max(maxA, na);
      xi = std::max(xi, n * (1.0 + std::abs(b(k))) / (1.0 + na));
    }
    eta = std::max(eta, std::max(maxA, blk.C.norm()));
    X.push_back(xi * MatrixXd::Identity(blk.n, blk.n));
    S.push_back(eta * MatrixXd::Identity(blk.n, blk.n));
  }
  double normC = 0.0;
  for (const auto& blk : blocks) normC = std::max(normC, blk.C.norm());
  const double normb = b.norm();

  std::deque<double> merit_history;
  // Best iterate by merit; returned when the method stalls.
  double best_merit = std::numeric_limits<double>::infinity();
  VectorXd best_z = z;
  std::vector<MatrixXd> best_X = X;
  const std::size_t nb = blocks.size();
  std::vector<MatrixXd> G(nb), Rd(nb), RdT(nb), B(nb);
  std::vector<VectorXd> lam(nb);

  for (int iter = 0;; ++iter) {
    sol.iterations = iter;
    // Residuals.
    VectorXd rp = b;
    double pobj = 0.0, gapsum = 0.0, rd_norm = 0.0, xnorm = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
      const Index n = static_cast<Index>(blocks[j].n);
      rp -= blocks[j].A.transpose() * detail::vec(X[j]);
      Rd[j] = blocks[j].C - S[j] - detail::reshape(blocks[j].A * z, n);
      pobj += (blocks[j].C.cwiseProduct(X[j])).sum();
      gapsum += (X[j].cwiseProduct(S[j])).sum();
      rd_norm = std::max(rd_norm, Rd[j].norm());
      xnorm = std::max(xnorm, X[j].norm());
    }
    const double dobj = b.dot(z);
    const double mu = gapsum / static_cast<double>(ntot);
    const double pinf_int = rp.norm() / (1.0 + normb);
    const double dinf_int = rd_norm / (1.0 + normC);
    const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double merit = std::max({pinf_int, dinf_int, relgap});
    if (opt.verbose)
      std::fprintf(stderr, "it %3d  pobj % .10e  dobj % .10e  pinf %.2e  dinf %.2e  gap %.2e  mu %.2e\n", iter, pobj, dobj,
                   pinf_int, dinf_int, relgap, mu);

    if (merit < best_merit) {
      best_merit = merit;
      best_z = z;
      best_X = X;
    }
    if (merit <= opt.tol) {
      assemble_user(z, X, sol);
      if (red.unbounded_direction && sol.primal_infeasibility <= opt.tol) {
        // Feasible, and the objective decreases along a cone-free direction.
        sol.status = SolveStatus::Unbounded;
        sol.primal_objective = -std::numeric_limits<double>::infinity();
        return sol;
      }
      if (sol.max_residual() <= opt.tol) {
        sol.status = SolveStatus::Optimal;
        return sol;
      }
    }
    // Infeasibility certificates.
    if (xnorm > 1e10 && pobj / xnorm < -1e-6 && (b - rp).norm() < 1e-6 * xnorm) {
      assemble_user(z, X, sol);
      sol.status = SolveStatus::Infeasible;
      return sol;
    }
    if (z.norm() > 1e10 && dobj / z.norm() > 1e-6) {
      double lmax = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nb; ++j)
        lmax = std::max(lmax, detail::max_eigenvalue(detail::reshape(blocks[j].A * z, static_cast<Index>(blocks[j].n))));
      if (lmax / z.norm() < 1e-6) {
        assemble_user(z, X, sol);
        sol.status = SolveStatus::Unbounded;
        return sol;
      }
    }
    if (iter >= opt.max_iterations) {
      assemble_user(best_z, best_X, sol);
      sol.status = SolveStatus::IterationLimit;
      return sol;
    }
    merit_history.push_back(merit);
    if (merit_history.size() > 11) merit_history.pop_front();
    if (merit_history.size() == 11 && merit > 0.99 * merit_history.front()) {
      assemble_user(best_z, best_X, sol);
      sol.status = SolveStatus::SlowProgress;
      return sol;
    }

    // Nesterov-Todd scaling: W = G G', G' S G = G^{-1} X G^{-T} = diag(lam).
    bool scaling_ok = true;
    for (std::size_t j = 0; j < nb && scaling_ok; ++j) {
      const Index n = static_cast<Index>(blocks[j].n);
      if (n == 1) {
        const double x = X[j](0, 0), s = S[j](0, 0);
        if (!(x > 0 && s > 0)) {
          scaling_ok = false;
          break;
        }
        G[j] = MatrixXd::Constant(1, 1, std::sqrt(std::sqrt(x / s)));
        lam[j] = VectorXd::Constant(1, std::sqrt(x * s));
      } else {
        Eigen::LLT<MatrixXd> lx(X[j]), ls(S[j]);
        if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) {
          scaling_ok = false;
          break;
        }
        const MatrixXd L = lx.matrixL(), R = ls.matrixL();
        Eigen::JacobiSVD<MatrixXd> svd(R.transpose() * L, Eigen::ComputeFullU | Eigen::ComputeFullV);
        lam[j] = svd.singularValues();
        if (lam[j].minCoeff() <= 0) {
          scaling_ok = false;
          break;
        }
        G[j] = L * svd.matrixV() * lam[j].cwiseSqrt().cwiseInverse().asDiagonal();
      }
      B[j].resize(n * n, K);
      for (Index k = 0; k < K; ++k) {
        const MatrixXd Ak = detail::reshape(blocks[j].A.col(k), n);
        const MatrixXd At = G[j].transpose() * Ak * G[j];
        B[j].col(k) = detail::vec(At);
      }
      RdT[j] = G[j].transpose() * Rd[j] * G[j];
    }
    if (!scaling_ok) {
      assemble_user(best_z, best_X, sol);
      sol.status = SolveStatus::SlowProgress;
      return sol;
    }

    // Schur system M dz = rhs with M = sum_j B_j' B_j, solved through a QR
    // factor of the stacked B so that M itself is never formed.
    Index rows = 0;
    for (std::size_t j = 0; j < nb; ++j) rows += B[j].rows();
    MatrixXd stacked(std::max(rows, K), K);
    stacked.setZero();
    {
      Index at = 0;
      for (std::size_t j = 0; j < nb; ++j) {
        stacked.middleRows(at, B[j].rows()) = B[j];
        at += B[j].rows();
      }
    }
    const Eigen::HouseholderQR<MatrixXd> schur(stacked);
    MatrixXd Rs = schur.matrixQR().topRows(K).triangularView<Eigen::Upper>();
    {
      const double dmax = Rs.diagonal().cwiseAbs().maxCoeff();
      const double floor = 1e-15 * (1.0 + dmax);
      bool singular = !(dmax > 0);
      for (Index k = 0; k < K && !singular; ++k)
        if (std::abs(Rs(k, k)) < floor) Rs(k, k) = Rs(k, k) < 0 ? -floor : floor;
      if (singular) {
        assemble_user(best_z, best_X, sol);
        sol.status = SolveStatus::SlowProgress;
        return sol;
      }
    }
    auto schur_solve = [&](const VectorXd& rhs) -> VectorXd {
      VectorXd w = Rs.transpose().triangularView<Eigen::Lower>().solve(rhs);
      return Rs.triangularView<Eigen::Upper>().solve(w);
    };
    // The explicitly formed normal matrix behaves better on degenerate
    // programs (no strictly feasible point); both factors are tried below.
    MatrixXd M = MatrixXd::Zero(K, K);
    for (std::size_t j = 0; j < nb; ++j) M.selfadjointView<Eigen::Lower>().rankUpdate(B[j].transpose());
    M = M.selfadjointView<Eigen::Lower>();
    Eigen::LLT<MatrixXd> chol(M);
    if (chol.info() != Eigen::Success) chol.compute(M + 1e-14 * (1.0 + M.diagonal().maxCoeff()) * MatrixXd::Identity(K, K));
    const bool have_chol = chol.info() == Eigen::Success;

    struct Direction {
      std::vector<MatrixXd> dX, dS, dXt, dSt;
      VectorXd dz;
    };
    // Solve with complementarity right-hand side lam o (dXt + dSt) = Rc.
    auto direction = [&](const std::vector<MatrixXd>& Rc) {
      Direction d;
      std::vector<MatrixXd> Y(nb);
      VectorXd rhs = rp;
      for (std::size_t j = 0; j < nb; ++j) {
        const Index n = static_cast<Index>(blocks[j].n);
        Y[j].resize(n, n);
        for (Index a = 0; a < n; ++a)
          for (Index c = 0; c < n; ++c) Y[j](a, c) = 2.0 * Rc[j](a, c) / (lam[j](a) + lam[j](c));
        rhs -= B[j].transpose() * detail::vec(Y[j] - RdT[j]);
      }
      // Iterative refinement against the unscaled equations <A_k, dX> = rp_k.
      // The Schur factors lose accuracy as the NT scaling degenerates, so a
      // correction is kept only while it shrinks the residual.
      auto build = [&](const VectorXd& dz, Direction& out) {
        out.dz = dz;
        out.dX.clear();
        out.dS.clear();
        out.dXt.clear();
        out.dSt.clear();
        VectorXd err = rp;
        for (std::size_t j = 0; j < nb; ++j) {
          const Index n = static_cast<Index>(blocks[j].n);
          MatrixXd dSt = RdT[j] - detail::reshape(B[j] * dz, n);
          MatrixXd dXt = Y[j] - dSt;
          MatrixXd dX = G[j] * dXt * G[j].transpose();
          MatrixXd dS = Rd[j] - detail::reshape(blocks[j].A * dz, n);
          out.dX.push_back(0.5 * (dX + dX.transpose()));
          out.dS.push_back(0.5 * (dS + dS.transpose()));
          out.dXt.push_back(std::move(dXt));
          out.dSt.push_back(std::move(dSt));
          err -= blocks[j].A.transpose() * detail::vec(out.dX.back());
        }
        return err.norm();
      };
      auto refined = [&](auto&& factor_solve, Direction& out) {
        double err = build(factor_solve(rhs), out);
        for (int pass = 0; pass < 3 && err > 1e-14 * (1.0 + normb); ++pass) {
          VectorXd e = rp;
          for (std::size_t j = 0; j < nb; ++j) e -= blocks[j].A.transpose() * detail::vec(out.dX[j]);
          Direction trial;
          const double trial_err = build(out.dz + factor_solve(e), trial);
          if (!(trial_err < 0.5 * err)) break;
          out = std::move(trial);
          err = trial_err;
        }
        return err;
      };
      const double err_qr = refined(schur_solve, d);
      if (have_chol) {
        Direction alt;
        const double err_chol = refined([&](const VectorXd& v) -> VectorXd { return chol.solve(v); }, alt);
        if (err_chol < err_qr) d = std::move(alt);
      }
      return d;
    };
    auto steps = [&](const Direction& d) {
      double ap = std::numeric_limits<double>::infinity(), ad = ap;
      for (std::size_t j = 0; j < nb; ++j) {
        ap = std::min(ap, detail::max_step(X[j], d.dX[j]));
        ad = std::min(ad, detail::max_step(S[j], d.dS[j]));
      }
      return std::pair{ap, ad};
    };

    std::vector<MatrixXd> Rc(nb);
    for (std::size_t j = 0; j < nb; ++j) Rc[j] = -MatrixXd(lam[j].cwiseAbs2().asDiagonal());
    const Direction pred = direction(Rc);
    auto [ap, ad] = steps(pred);
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double mu_aff = 0.0;
    for (std::size_t j = 0; j < nb; ++j) mu_aff += ((X[j] + ap * pred.dX[j]).cwiseProduct(S[j] + ad * pred.dS[j])).sum();
    mu_aff /= static_cast<double>(ntot);
    const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

    for (std::size_t j = 0; j < nb; ++j) {
      const Index n = static_cast<Index>(blocks[j].n);
      Rc[j] = sigma * mu * MatrixXd::Identity(n, n) - MatrixXd(lam[j].cwiseAbs2().asDiagonal()) -
              detail::sym_product(pred.dXt[j], pred.dSt[j]);
    }
    const Direction corr = direction(Rc);
    auto [cp, cd] = steps(corr);
    cp = std::min(1.0, opt.step_fraction * cp);
    cd = std::min(1.0, opt.step_fraction * cd);
    if (opt.verbose) std::fprintf(stderr, "        step p %.3f  d %.3f  sigma %.2e  |X| %.2e  |z| %.2e\n", cp, cd, sigma, xnorm, z.norm());
    if (cp < 1e-12 && cd < 1e-12) {
      assemble_user(best_z, best_X, sol);
      sol.status = SolveStatus::SlowProgress;
      return sol;
    }
    for (std::size_t j = 0; j < nb; ++j) {
      X[j] += cp * corr.dX[j];
      S[j] += cd * corr.dS[j];
    }
    z += cd * corr.dz;
  }
}


// ---------------------------------------------------------------------------
// SDPA sparse format (.dat-s).
//
// Programs are written in standard form with one matrix variable Y_j per cone
// block, in SDPA's dual convention
//   maximize <F_0, Y>  subject to  <F_i, Y> = c_i,  Y >= 0,
// with F_0 = -C for our objective min <C, Y>, so the SDPA optimum is minus
// ours. Each y_k is read off a block entry equal to a multiple of y_k alone;
// variables without such an entry are split into a nonnegative pair held in a
// trailing diagonal block. Every other block entry is tied to y by a linking
// row, and equality rows are kept only where they are linearly independent.
// A nonzero objective offset goes into a leading "* objective_offset" comment.

namespace detail {

inline std::string sdpa_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using SlotKey = std::tuple<std::size_t, std::size_t, std::size_t>;  // block, row <= col
using SlotForm = std::map<SlotKey, double>;

inline void add_scaled(SlotForm& dst, const SlotForm& src, double s) {
  for (const auto& [k, v] : src) dst[k] += s * v;
}

}  // namespace detail

inline std::string export_sdpa(const ConicProgram& program, double rank_threshold = 1e-10) {
  using detail::SlotForm;
  using detail::SlotKey;
  program.validate();
  const detail::ReducedProgram red = detail::reduce(program, rank_threshold, 1e-8);
  if (red.inconsistent) throw std::invalid_argument("equality constraints are inconsistent");
  const std::size_t N = program.num_vars, nb = program.blocks.size();

  struct Entry {
    std::map<std::size_t, double> lin;
    double constant = 0.0;
  };
  std::vector<std::map<std::pair<std::size_t, std::size_t>, Entry>> entries(nb);
  for (std::size_t j = 0; j < nb; ++j)
    for (const auto& e : program.blocks[j].entries) {
      Entry& en = entries[j][{e.row, e.col}];
      if (e.var == kConstantTerm)
        en.constant += e.value;
      else
        en.lin[e.var] += e.value;
    }

  std::vector<SlotForm> ymap(N);
  std::vector<bool> has_rep(N, false);
  std::set<SlotKey> rep_slots;
  for (std::size_t j = 0; j < nb; ++j)
    for (auto& [pos, en] : entries[j]) {
      std::erase_if(en.lin, [](const auto& kv) { return kv.second == 0.0; });
      if (en.constant != 0.0 || en.lin.size() != 1) continue;
      const auto [k, a] = *en.lin.begin();
      if (has_rep[k]) continue;
      has_rep[k] = true;
      const SlotKey key{j, pos.first, pos.second};
      rep_slots.insert(key);
      ymap[k][key] = 1.0 / a;
    }
  std::size_t nfree = 0;
  for (std::size_t k = 0; k < N; ++k)
    if (!has_rep[k]) {
      ymap[k][SlotKey{nb, 2 * nfree, 2 * nfree}] = 1.0;
      ymap[k][SlotKey{nb, 2 * nfree + 1, 2 * nfree + 1}] = -1.0;
      ++nfree;
    }

  std::vector<std::pair<SlotForm, double>> rows;
  for (std::size_t i : red.kept_rows) {
    SlotForm f;
    for (std::size_t k = 0; k < N; ++k) {
      const double a = program.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      if (a != 0.0) detail::add_scaled(f, ymap[k], a);
    }
    rows.emplace_back(std::move(f), program.b(static_cast<Eigen::Index>(i)));
  }
  for (std::size_t j = 0; j < nb; ++j) {
    const auto& blk = program.blocks[j];
    for (std::size_t p = 0; p < blk.size; ++p)
      for (std::size_t q = p; q < (blk.diagonal ? p + 1 : blk.size); ++q) {
        const SlotKey key{j, p, q};
        if (rep_slots.count(key)) continue;
        SlotForm f;
        f[key] = 1.0;
        double rhs = 0.0;
        if (auto it = entries[j].find({p, q}); it != entries[j].end()) {
          for (const auto& [k, a] : it->second.lin) detail::add_scaled(f, ymap[k], -a);
          rhs = it->second.constant;
        }
        rows.emplace_back(std::move(f), rhs);
      }
  }
  SlotForm objective;
  for (std::size_t k = 0; k < N; ++k)
    if (program.c(static_cast<Eigen::Index>(k)) != 0.0) detail::add_scaled(objective, ymap[k], program.c(static_cast<Eigen::Index>(k)));

  std::ostringstream o;
  if (program.objective_offset != 0.0) o << "* objective_offset " << detail::sdpa_number(program.objective_offset) << "\n";
  o << rows.size() << "\n" << nb + (nfree ? 1 : 0) << "\n";
  for (std::size_t j = 0; j < nb; ++j) {
    const auto n = static_cast<long long>(program.blocks[j].size);
    o << (j ? " " : "") << (program.blocks[j].diagonal ? -n : n);
  }
  if (nfree) o << (nb ? " " : "") << -static_cast<long long>(2 * nfree);
  o << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) o << (i ? " " : "") << detail::sdpa_number(rows[i].second);
  o << "\n";
  // <F, Y> counts an off-diagonal F_pq twice, so slot coefficients are halved there.
  auto emit = [&](std::size_t matno, const SlotForm& f, double sign) {
    for (const auto& [key, v] : f) {
      const auto [j, p, q] = key;
      const double w = sign * v * (p == q ? 1.0 : 0.5);
      if (w == 0.0) continue;
      o << matno << " " << j + 1 << " " << p + 1 << " " << q + 1 << " " << detail::sdpa_number(w) << "\n";
    }
  };
  emit(0, objective, -1.0);
  for (std::size_t i = 0; i < rows.size(); ++i) emit(i + 1, rows[i].first, 1.0);
  return o.str();
}

/// Read an SDPA sparse file as the standard-form program min <-F_0, Y>,
/// <F_i, Y> = c_i, Y >= 0; variables are the upper-triangle entries of the Y_j.
inline ConicProgram import_sdpa(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  ConicProgram p;
  std::string body_text;
  while (std::getline(in, line)) {
    if (!line.empty() && (line[0] == '*' || line[0] == '"')) {
      std::istringstream c(line.substr(1));
      std::string key;
      double v = 0;
      if (c >> key >> v && key == "objective_offset") p.objective_offset = v;
      continue;
    }
    for (char& ch : line)
      if (ch == ',' || ch == '{' || ch == '}' || ch == '(' || ch == ')') ch = ' ';
    body_text += line + "\n";
  }
  std::istringstream body(body_text);
  long long m = 0, nblocks = 0;
  if (!(body >> m >> nblocks) || m < 0 || nblocks < 0) throw std::invalid_argument("malformed SDPA header");

  std::vector<std::size_t> first_var;
  std::size_t nvars = 0;
  for (long long j = 0; j < nblocks; ++j) {
    long long s = 0;
    if (!(body >> s) || s == 0) throw std::invalid_argument("malformed SDPA block sizes");
    const auto n = static_cast<std::size_t>(std::llabs(s));
    ConeBlock blk{n, s < 0, {}};
    first_var.push_back(nvars);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t q = r; q < (blk.diagonal ? r + 1 : n); ++q) blk.entries.push_back({nvars++, r, q, 1.0});
    p.blocks.push_back(std::move(blk));
  }
  auto var_of = [&](std::size_t j, std::size_t r, std::size_t q) {
    const auto& blk = p.blocks[j];
    if (blk.diagonal) return first_var[j] + r;
    return first_var[j] + r * blk.size - r * (r - 1) / 2 + (q - r);  // row-major upper triangle
  };

  p.num_vars = nvars;
  p.c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nvars));
  p.A = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(nvars));
  p.b.resize(m);
  for (long long i = 0; i < m; ++i)
    if (!(body >> p.b(i))) throw std::invalid_argument("malformed SDPA right-hand side");
  long long matno = 0, blkno = 0, i = 0, j = 0;
  double v = 0;
  while (body >> matno >> blkno >> i >> j >> v) {
    if (blkno < 1 || blkno > nblocks || matno < 0 || matno > m) throw std::invalid_argument("SDPA entry out of range");
    const auto b = static_cast<std::size_t>(blkno - 1);
    if (i > j) std::swap(i, j);
    if (i < 1 || static_cast<std::size_t>(j) > p.blocks[b].size) throw std::invalid_argument("SDPA entry index out of range");
    if (p.blocks[b].diagonal && i != j) throw std::invalid_argument("off-diagonal SDPA entry in a diagonal block");
    const auto var = static_cast<Eigen::Index>(var_of(b, static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1)));
    const double w = v * (i == j ? 1.0 : 2.0);
    if (matno == 0)
      p.c(var) -= w;
    else
      p.A(matno - 1, var) += w;
  }
  if (!body.eof()) throw std::invalid_argument("malformed SDPA entry");
  p.validate();
  return p;
}

}  // namespace occmom
