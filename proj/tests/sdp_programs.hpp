#pragma once

// Small conic programs with known optima, shared by the unit tests and the acceptance run.

#include <random>
#include <utility>
#include <vector>

#include "occmom/sdp.hpp"

namespace occmom::fixtures {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline ConicProgram one_by_one() {
  ConicProgram p;
  p.num_vars = 1;
  p.c = VectorXd::Ones(1);
  p.A = MatrixXd::Ones(1, 1);
  p.b = VectorXd::Ones(1);
  p.blocks.push_back({1, false, {{0, 0, 0, 1.0}}});
  return p;
}

// Variables y11, y12, y22 of a 2x2 correlation matrix.
inline ConicProgram correlation() {
  ConicProgram p;
  p.num_vars = 3;
  p.c = VectorXd::Zero(3);
  p.c(1) = 2.0;
  p.A = MatrixXd::Zero(2, 3);
  p.A(0, 0) = 1.0;
  p.A(1, 2) = 1.0;
  p.b = VectorXd::Ones(2);
  p.blocks.push_back({2, false, {{0, 0, 0, 1.0}, {1, 0, 1, 1.0}, {2, 1, 1, 1.0}}});
  return p;
}

// Order-1 relaxation of min x^2 on [-1, 1]: variables y0, y1, y2.
inline ConicProgram square_on_interval() {
  ConicProgram p;
  p.num_vars = 3;
  p.c = VectorXd::Zero(3);
  p.c(2) = 1.0;
  p.A = MatrixXd::Zero(1, 3);
  p.A(0, 0) = 1.0;
  p.b = VectorXd::Ones(1);
  p.blocks.push_back({2, false, {{0, 0, 0, 1.0}, {1, 0, 1, 1.0}, {2, 1, 1, 1.0}}});
  p.blocks.push_back({1, false, {{0, 0, 0, 1.0}, {2, 0, 0, -1.0}}});
  return p;
}

inline MatrixXd random_orthogonal(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = g(rng);
  return Eigen::HouseholderQR<MatrixXd>(M).householderQ() * MatrixXd::Identity(n, n);
}

struct Constructed {
  ConicProgram program;
  VectorXd y_star;
  double value = 0.0;
};

// Random program with a known optimum y*. X* = F(y*) and a dual Z* are strictly
// complementary, c = A' lambda* + F*(Z*). The first row of A is F*(I), so
// (lambda* - e1, Z* + I) is strictly dual feasible; one F_k is solved for so that
// sum_k d_k F_k = I - X* along a null direction d of A, making y* + d strictly
// primal feasible (consistent because trace X* = total dimension).
inline Constructed random_program(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nvar(3, 8), nblk(1, 3), bsize(1, 4), coin(0, 3);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  const int N = nvar(rng);
  const int nb = nblk(rng);
  std::uniform_int_distribution<int> nrow(1, N - 2);
  const int m = nrow(rng);

  struct Blk {
    int n;
    bool diagonal;
    MatrixXd Xs, Zs;
    std::vector<MatrixXd> F;
  };
  std::vector<Blk> blocks;
  int total = 0;
  for (int j = 0; j < nb; ++j) {
    Blk b{bsize(rng), coin(rng) == 0, {}, {}, {}};
    const MatrixXd V = b.diagonal ? MatrixXd::Identity(b.n, b.n) : random_orthogonal(rng, b.n);
    std::uniform_int_distribution<int> rk(0, b.n);
    const int rank = rk(rng);
    VectorXd xe = VectorXd::Zero(b.n), ze = VectorXd::Zero(b.n);
    for (int i = 0; i < b.n; ++i) (i < rank ? xe(i) : ze(i)) = pos(rng);
    b.Xs = V * xe.asDiagonal() * V.transpose();
    b.Zs = V * ze.asDiagonal() * V.transpose();
    total += b.n;
    blocks.push_back(std::move(b));
  }
  double tr = 0;
  for (const auto& b : blocks) tr += b.Xs.trace();
  if (tr == 0) {
    blocks[0].Xs(0, 0) = 1.0;  // keep complementarity: rank was zero, so Z* must give way
    blocks[0].Zs.row(0).setZero();
    blocks[0].Zs.col(0).setZero();
    tr = 1.0;
  }
  for (auto& b : blocks) b.Xs *= total / tr;

  VectorXd d(N);
  for (int k = 0; k < N; ++k) d(k) = g(rng);
  Eigen::Index k0 = 0;
  d.cwiseAbs().maxCoeff(&k0);
  for (auto& b : blocks) {
    b.F.assign(N, MatrixXd::Zero(b.n, b.n));
    MatrixXd rest = MatrixXd::Identity(b.n, b.n) - b.Xs;
    for (int k = 0; k < N; ++k) {
      if (k == k0) continue;
      MatrixXd R(b.n, b.n);
      for (int i = 0; i < b.n; ++i)
        for (int j = 0; j < b.n; ++j) R(i, j) = g(rng);
      b.F[k] = b.diagonal ? MatrixXd(R.diagonal().asDiagonal()) : MatrixXd(0.5 * (R + R.transpose()));
      rest -= d(k) * b.F[k];
    }
    b.F[k0] = rest / d(k0);
  }

  MatrixXd A(m, N);
  for (int k = 0; k < N; ++k) {
    double s = 0;
    for (const auto& b : blocks) s += b.F[k].trace();
    A(0, k) = s;
  }
  for (int i = 1; i < m; ++i) {
    VectorXd row(N);
    for (int k = 0; k < N; ++k) row(k) = g(rng);
    A.row(i) = (row - row.dot(d) / d.squaredNorm() * d).transpose();
  }

  VectorXd ys(N), lam(m);
  for (int k = 0; k < N; ++k) ys(k) = g(rng);
  for (int i = 0; i < m; ++i) lam(i) = g(rng);
  VectorXd c = A.transpose() * lam;
  for (const auto& b : blocks)
    for (int k = 0; k < N; ++k) c(k) += (b.F[k].cwiseProduct(b.Zs)).sum();

  Constructed out;
  ConicProgram& p = out.program;
  p.num_vars = static_cast<std::size_t>(N);
  p.c = c;
  p.A = A;
  p.b = A * ys;
  for (const auto& b : blocks) {
    MatrixXd F0 = b.Xs;
    for (int k = 0; k < N; ++k) F0 -= ys(k) * b.F[k];
    ConeBlock cb{static_cast<std::size_t>(b.n), b.diagonal, {}};
    for (int i = 0; i < b.n; ++i)
      for (int j = i; j < (b.diagonal ? i + 1 : b.n); ++j) {
        cb.entries.push_back({kConstantTerm, static_cast<std::size_t>(i), static_cast<std::size_t>(j), F0(i, j)});
        for (int k = 0; k < N; ++k)
          cb.entries.push_back({static_cast<std::size_t>(k), static_cast<std::size_t>(i), static_cast<std::size_t>(j), b.F[k](i, j)});
      }
    p.blocks.push_back(std::move(cb));
  }
  out.y_star = ys;
  out.value = c.dot(ys);
  return out;
}

}  // namespace occmom::fixtures
