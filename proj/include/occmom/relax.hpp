#pragma once

// Order-r moment relaxation of the occupation-measure LP.
//
// Unknowns are the moments y_mu of the occupation measure on (t, x, u) up to
// degree 2r and the moments y_T of the terminal measure on x up to degree 2r
// (time fixed at T). Every test monomial v = t^a x^b yields one Liouville row
//   <v(T, .), y_T> - <Lv, y_mu> = <v, mu_0>.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "occmom/poly.hpp"
#include "occmom/problem.hpp"
#include "occmom/sdp.hpp"

namespace occmom {

/// Sparse linear form over flat moment-variable offsets.
using LinearForm = std::map<std::size_t, double>;

inline void accumulate(LinearForm& form, std::size_t var, double coeff) {
  if (coeff == 0.0) return;
  auto [it, inserted] = form.try_emplace(var, coeff);
  if (!inserted) {
    it->second += coeff;
    if (it->second == 0.0) form.erase(it);
  }
}

inline double evaluate(const LinearForm& form, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (const auto& [k, c] : form) s += c * y[static_cast<Eigen::Index>(k)];
  return s;
}

/// Graded-lex list of the monomials in a subset of variables up to a degree,
/// mapped to consecutive flat offsets starting at `offset`.
class MomentIndex {
 public:
  MomentIndex() = default;
  MomentIndex(VariableSpace space, std::vector<std::size_t> vars, unsigned degree, std::size_t offset = 0)
      : space_(space), vars_(std::move(vars)), degree_(degree), offset_(offset) {
    Monomial m(space_.size());
    enumerate(m, 0, degree_);
    std::sort(monomials_.begin(), monomials_.end(), GradedLex{});
    for (std::size_t k = 0; k < monomials_.size(); ++k) lookup_.emplace(monomials_[k], k);
  }

  const VariableSpace& space() const { return space_; }
  const std::vector<std::size_t>& variables() const { return vars_; }
  unsigned degree() const { return degree_; }
  std::size_t offset() const { return offset_; }
  std::size_t size() const { return monomials_.size(); }
  const std::vector<Monomial>& monomials() const { return monomials_; }
  const Monomial& monomial(std::size_t local) const { return monomials_[local]; }

  /// Number of leading monomials of degree <= d.
  std::size_t count_up_to(unsigned d) const {
    return static_cast<std::size_t>(std::count_if(monomials_.begin(), monomials_.end(), [d](const Monomial& m) { return m.degree() <= d; }));
  }

  std::optional<std::size_t> find(const Monomial& m) const {
    auto it = lookup_.find(m);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  /// Flat variable offset of a monomial; throws if it is not indexed.
  std::size_t at(const Monomial& m) const {
    auto k = find(m);
    if (!k) throw std::out_of_range("monomial not in moment index");
    return offset_ + *k;
  }

  bool covers(const Polynomial& p) const {
    for (const auto& [m, c] : p.terms())
      if (!find(m)) return false;
    return true;
  }

  /// Linear form <p, y> over this index.
  LinearForm pair(const Polynomial& p) const {
    LinearForm f;
    for (const auto& [m, c] : p.terms()) accumulate(f, at(m), c);
    return f;
  }

 private:
  void enumerate(Monomial& m, std::size_t pos, unsigned remaining) {
    if (pos == vars_.size()) {
      monomials_.push_back(m);
      return;
    }
    for (unsigned e = 0; e <= remaining; ++e) {
      m[vars_[pos]] = e;
      enumerate(m, pos + 1, remaining - e);
    }
    m[vars_[pos]] = 0;
  }

  VariableSpace space_;
  std::vector<std::size_t> vars_;
  unsigned degree_ = 0;
  std::size_t offset_ = 0;
  std::vector<Monomial> monomials_;
  std::map<Monomial, std::size_t, GradedLex> lookup_;
};

inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Symmetric matrix whose entries are linear forms in the moment variables.
struct LinearBlockMatrix {
  std::string label;
  std::size_t size = 0;
  std::vector<LinearForm> upper;  // row-major upper triangle

  LinearBlockMatrix() = default;
  LinearBlockMatrix(std::string name, std::size_t n) : label(std::move(name)), size(n), upper(n * (n + 1) / 2) {}

  static std::size_t slot(std::size_t i, std::size_t j, std::size_t n) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i - 1) / 2 + (j - i);
  }
  LinearForm& entry(std::size_t i, std::size_t j) { return upper[slot(i, j, size)]; }
  const LinearForm& entry(std::size_t i, std::size_t j) const { return upper[slot(i, j, size)]; }

  Eigen::MatrixXd evaluate(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd M(size, size);
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = i; j < size; ++j) M(i, j) = M(j, i) = occmom::evaluate(entry(i, j), y);
    return M;
  }
};

/// Moment matrix of order r: entry (alpha, gamma) is y_{alpha+gamma}.
inline LinearBlockMatrix moment_block(const MomentIndex& index, unsigned r, std::string label = "moment") {
  if (r == 0) throw std::invalid_argument("moment block order must be at least 1");
  if (2 * r > index.degree()) throw std::invalid_argument("moment index too small for the requested order");
  const std::size_t n = index.count_up_to(r);
  LinearBlockMatrix M(std::move(label), n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) accumulate(M.entry(i, j), index.at(index.monomial(i) * index.monomial(j)), 1.0);
  return M;
}

/// Localizing matrix of g: entry (alpha, gamma) is sum_delta g_delta y_{alpha+gamma+delta}.
inline LinearBlockMatrix localizing_block(const Polynomial& g, const MomentIndex& index, unsigned r, std::string label = "localizing") {
  if (r == 0) throw std::invalid_argument("localizing block order must be at least 1");
  const unsigned half = (g.degree() + 1) / 2;
  if (g.degree() > 2 * r) throw std::invalid_argument("localizing polynomial degree exceeds 2r");
  if (2 * r > index.degree()) throw std::invalid_argument("moment index too small for the requested order");
  const std::size_t n = index.count_up_to(r - half);
  LinearBlockMatrix M(std::move(label), n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const Monomial base = index.monomial(i) * index.monomial(j);
      for (const auto& [delta, coeff] : g.terms()) accumulate(M.entry(i, j), index.at(base * delta), coeff);
    }
  return M;
}

struct LiouvilleEquality {
  LinearForm row;
  double rhs = 0.0;
  Monomial test;  // t^a x^b that generated the row
};

struct MomentRelaxation {
  unsigned order = 0;
  VariableSpace space;
  double terminal_time = 1.0;
  MomentIndex occupation;  // y_mu over (t, x, u), degree 2r
  MomentIndex terminal;    // y_T over x, degree 2r, offsets after y_mu
  LinearForm objective;
  std::vector<LiouvilleEquality> equalities;
  std::vector<LinearBlockMatrix> blocks;

  std::size_t num_variables() const { return occupation.size() + terminal.size(); }
};

/// max_i deg(f_i).
inline unsigned dynamics_degree(const ControlProblem& p) {
  unsigned d = 0;
  for (const auto& fi : p.f) d = std::max(d, fi.degree());
  return d;
}

/// Highest total degree of a test monomial at order r: 2r - max(deg f - 1, 0).
inline int test_degree_bound(const ControlProblem& p, unsigned r) {
  const int df = static_cast<int>(dynamics_degree(p));
  return 2 * static_cast<int>(r) - std::max(df - 1, 0);
}

/// Smallest order for which every block and row is well formed.
inline unsigned minimum_order(const ControlProblem& p) {
  unsigned d = std::max({2u, p.l.degree(), p.l_T.degree(), dynamics_degree(p)});
  unsigned r = (d + 1) / 2;
  while (test_degree_bound(p, r) < 1) ++r;
  return r;
}

/// Row <v(T,.), y_T> - <Lv, y_mu> for the test monomial v = t^a x^b.
inline LinearForm liouville_row(const Monomial& test, const ControlProblem& problem, const MomentIndex& occupation,
                                const MomentIndex& terminal) {
  const VariableSpace& sp = problem.space;
  for (std::size_t j = 0; j < sp.m_control(); ++j)
    if (test[sp.control(j)] != 0) throw std::invalid_argument("test monomials must not involve controls");
  const Polynomial v = Polynomial::monomial(sp, test);
  const Polynomial Lv = apply_generator(v, problem.f);
  if (test.degree() > terminal.degree() || Lv.degree() > occupation.degree() || !occupation.covers(Lv))
    throw std::invalid_argument("test monomial violates the degree rule");
  LinearForm row = terminal.pair(restrict_variable(v, VariableSpace::time(), problem.T));
  for (const auto& [m, c] : Lv.terms()) accumulate(row, occupation.at(m), -c);
  return row;
}

/// Assemble the order-r relaxation of `problem` (normally the scaled problem).
inline MomentRelaxation assemble(const ControlProblem& problem, unsigned r) {
  problem.validate();
  if (r < minimum_order(problem))
    throw std::invalid_argument("relaxation order " + std::to_string(r) + " too small, need at least " + std::to_string(minimum_order(problem)));
  const VariableSpace& sp = problem.space;
  MomentRelaxation rel;
  rel.order = r;
  rel.space = sp;
  rel.terminal_time = problem.T;

  std::vector<std::size_t> all(sp.size()), states;
  for (std::size_t k = 0; k < sp.size(); ++k) all[k] = k;
  for (std::size_t i = 0; i < sp.n_state(); ++i) states.push_back(sp.state(i));
  std::vector<std::size_t> time_states{VariableSpace::time()};
  time_states.insert(time_states.end(), states.begin(), states.end());

  rel.occupation = MomentIndex(sp, all, 2 * r, 0);
  rel.terminal = MomentIndex(sp, states, 2 * r, rel.occupation.size());

  rel.objective = rel.occupation.pair(problem.l);
  for (const auto& [k, c] : rel.terminal.pair(problem.l_T)) accumulate(rel.objective, k, c);

  const int bound = test_degree_bound(problem, r);
  const MomentIndex tests(sp, time_states, static_cast<unsigned>(std::max(bound, 0)));
  const std::vector<double> rhs = initial_moments(problem, tests.monomials());
  for (std::size_t k = 0; k < tests.size(); ++k)
    rel.equalities.push_back({liouville_row(tests.monomial(k), problem, rel.occupation, rel.terminal), rhs[k], tests.monomial(k)});

  rel.blocks.push_back(moment_block(rel.occupation, r, "moment mu"));
  const Polynomial t = Polynomial::variable(sp, VariableSpace::time());
  const Polynomial time_box = (Polynomial::constant(sp, problem.T) - t) * (t - Polynomial::constant(sp, problem.t0()));
  rel.blocks.push_back(localizing_block(time_box, rel.occupation, r, "time box mu"));
  const auto gx = problem.X.constraints(sp, sp.state(0));
  for (std::size_t i = 0; i < gx.size(); ++i) rel.blocks.push_back(localizing_block(gx[i], rel.occupation, r, "X" + std::to_string(i + 1) + " mu"));
  if (sp.m_control() > 0) {
    const auto gu = problem.U.constraints(sp, sp.control(0));
    for (std::size_t j = 0; j < gu.size(); ++j) rel.blocks.push_back(localizing_block(gu[j], rel.occupation, r, "U" + std::to_string(j + 1) + " mu"));
  }
  rel.blocks.push_back(moment_block(rel.terminal, r, "moment mu_T"));
  const auto gt = problem.X_T.constraints(sp, sp.state(0));
  for (std::size_t i = 0; i < gt.size(); ++i) rel.blocks.push_back(localizing_block(gt[i], rel.terminal, r, "XT" + std::to_string(i + 1) + " mu_T"));
  return rel;
}

inline MomentRelaxation assemble(const ScaledProblem& problem, unsigned r) { return assemble(problem.scaled, r); }

/// Flatten a relaxation into the solver's ConicProgram (same variable layout).
inline ConicProgram to_conic(const MomentRelaxation& rel) {
  ConicProgram p;
  p.num_vars = rel.num_variables();
  const auto N = static_cast<Eigen::Index>(p.num_vars);
  p.c = Eigen::VectorXd::Zero(N);
  for (const auto& [k, c] : rel.objective) p.c(static_cast<Eigen::Index>(k)) = c;
  p.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rel.equalities.size()), N);
  p.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rel.equalities.size()));
  for (std::size_t e = 0; e < rel.equalities.size(); ++e) {
    for (const auto& [k, c] : rel.equalities[e].row) p.A(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(k)) = c;
    p.b(static_cast<Eigen::Index>(e)) = rel.equalities[e].rhs;
  }
  for (const auto& blk : rel.blocks) {
    ConeBlock cb{blk.size, false, {}};
    for (std::size_t i = 0; i < blk.size; ++i)
      for (std::size_t j = i; j < blk.size; ++j)
        for (const auto& [k, c] : blk.entry(i, j)) cb.entries.push_back({k, i, j, c});
    p.blocks.push_back(std::move(cb));
  }
  return p;
}

}  // namespace occmom
