#pragma once

// Polynomial optimal control problems: data model, problem files, builtins and
// the affine rescaling onto [0,1] x [-1,1]^n x [-1,1]^m used before relaxation.

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "occmom/poly.hpp"

namespace occmom {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double center() const { return 0.5 * (lo + hi); }
  double half_width() const { return 0.5 * (hi - lo); }
  bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
  bool contains(const Interval& o) const { return o.lo >= lo && o.hi <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Product of closed intervals. Each interval [lo, hi] on variable v is encoded
/// by the single quadratic g = (hi - v)(v - lo) >= 0.
struct SemialgebraicBox {
  std::vector<Interval> intervals;

  std::size_t dim() const { return intervals.size(); }

  bool contains(std::span<const double> point, double tol = 0.0) const {
    for (std::size_t i = 0; i < intervals.size(); ++i)
      if (!intervals[i].contains(point[i], tol)) return false;
    return true;
  }
  bool contains(const SemialgebraicBox& o) const {
    if (o.dim() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (!intervals[i].contains(o.intervals[i])) return false;
    return true;
  }

  /// Constraint polynomials, interval i acting on variable first_var + i.
  std::vector<Polynomial> constraints(const VariableSpace& space, std::size_t first_var) const {
    std::vector<Polynomial> g;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
      const Polynomial v = Polynomial::variable(space, first_var + i);
      g.push_back((Polynomial::constant(space, intervals[i].hi) - v) * (v - Polynomial::constant(space, intervals[i].lo)));
    }
    return g;
  }

  friend bool operator==(const SemialgebraicBox&, const SemialgebraicBox&) = default;
};

struct DiracInitial {
  double t0 = 0.0;
  std::vector<double> x0;
};

/// delta_{t0} times the normalized uniform measure on a box X0.
struct UniformInitial {
  double t0 = 0.0;
  SemialgebraicBox box;
};

using InitialSpec = std::variant<DiracInitial, UniformInitial>;

inline double initial_time(const InitialSpec& s) {
  return std::visit([](const auto& v) { return v.t0; }, s);
}

struct ControlProblem {
  std::string name;
  VariableSpace space;
  std::vector<Polynomial> f;  // dynamics, one per state
  Polynomial l;               // running cost
  Polynomial l_T;             // terminal cost
  SemialgebraicBox X, U, X_T;
  double T = 1.0;
  InitialSpec initial;

  double t0() const { return initial_time(initial); }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const {
    const std::size_t n = space.n_state(), m = space.m_control();
    auto fail = [&](const std::string& why) { throw std::invalid_argument("problem '" + name + "': " + why); };
    if (f.size() != n) fail("expected " + std::to_string(n) + " dynamics components");
    if (X.dim() != n || X_T.dim() != n || U.dim() != m) fail("box dimensions do not match n, m");
    for (const auto* box : {&X, &U, &X_T})
      for (const auto& iv : box->intervals)
        if (!(iv.lo < iv.hi)) fail("empty or degenerate interval");
    if (!X.contains(X_T)) fail("terminal box not contained in state box");
    for (const auto& fi : f) {
      if (!(fi.space() == space)) fail("dynamics in a different variable space");
      if (fi.depends_on(VariableSpace::time())) fail("dynamics must not depend on t");
    }
    if (!(l.space() == space) || !(l_T.space() == space)) fail("costs in a different variable space");
    if (l.depends_on(VariableSpace::time())) fail("running cost must not depend on t");
    if (l_T.depends_on(VariableSpace::time())) fail("terminal cost must not depend on t");
    for (std::size_t j = 0; j < m; ++j)
      if (l_T.depends_on(space.control(j))) fail("terminal cost must not depend on controls");
    if (!(t0() >= 0.0 && T > t0())) fail("need T > t0 >= 0");
    if (const auto* d = std::get_if<DiracInitial>(&initial)) {
      if (d->x0.size() != n) fail("initial state has wrong dimension");
      if (!X.contains(d->x0)) fail("initial state outside the state box");
    } else {
      const auto& u = std::get<UniformInitial>(initial);
      if (u.box.dim() != n) fail("initial box has wrong dimension");
      for (const auto& iv : u.box.intervals)
        if (!(iv.lo < iv.hi)) fail("empty initial box");
      if (!X.contains(u.box)) fail("initial box not contained in the state box");
    }
  }
};

// ---------------------------------------------------------------------------
// Problem files: "key = value" lines, '#' comments.

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<double> parse_numbers(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw std::invalid_argument("key '" + key + "': '" + tok + "' is not a number");
    out.push_back(v);
  }
  return out;
}

inline Interval parse_interval(const std::string& text, const std::string& key) {
  const auto v = parse_numbers(text, key);
  if (v.size() != 2) throw std::invalid_argument("key '" + key + "': expected 'lo hi'");
  return {v[0], v[1]};
}

inline std::size_t parse_count(const std::string& text, const std::string& key) {
  const auto v = parse_numbers(text, key);
  if (v.size() != 1 || v[0] < 0 || v[0] != std::floor(v[0])) throw std::invalid_argument("key '" + key + "': expected a count");
  return static_cast<std::size_t>(v[0]);
}

}  // namespace detail

/// Parse the line-oriented problem format (see README). Unknown or duplicate keys are errors.
inline ControlProblem parse_problem(std::string_view text, std::string name = "problem") {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = detail::trim(std::string_view(stripped).substr(0, eq));
    std::string value = detail::trim(std::string_view(stripped).substr(eq + 1));
    if (!kv.emplace(key, value).second) throw std::invalid_argument("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }

  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto require = [&](const std::string& key) {
    auto v = take(key);
    if (!v) throw std::invalid_argument("missing key '" + key + "'");
    return *v;
  };

  ControlProblem p;
  p.name = std::move(name);
  const std::size_t n = detail::parse_count(require("n"), "n");
  const std::size_t m = detail::parse_count(require("m"), "m");
  if (n == 0) throw std::invalid_argument("n must be positive");
  p.space = VariableSpace(n, m);
  const double t0 = detail::parse_numbers(take("t0").value_or("0"), "t0").at(0);
  const auto Tv = detail::parse_numbers(require("T"), "T");
  if (Tv.size() != 1) throw std::invalid_argument("key 'T': expected one number");
  p.T = Tv[0];

  auto poly = [&](const std::string& key, const std::string& text) {
    try {
      return parse(text, p.space);
    } catch (const ParseError& e) {
      throw std::invalid_argument("key '" + key + "': " + e.what());
    }
  };
  for (std::size_t i = 1; i <= n; ++i) {
    const std::string key = "f" + std::to_string(i);
    p.f.push_back(poly(key, require(key)));
  }
  p.l = poly("l", require("l"));
  p.l_T = poly("l_T", take("l_T").value_or("0"));
  for (std::size_t i = 1; i <= n; ++i) {
    const std::string key = "X" + std::to_string(i);
    p.X.intervals.push_back(detail::parse_interval(require(key), key));
  }
  for (std::size_t j = 1; j <= m; ++j) {
    const std::string key = "U" + std::to_string(j);
    p.U.intervals.push_back(detail::parse_interval(require(key), key));
  }
  for (std::size_t i = 1; i <= n; ++i) {
    const std::string key = "XT" + std::to_string(i);
    auto v = take(key);
    p.X_T.intervals.push_back(v ? detail::parse_interval(*v, key) : p.X.intervals[i - 1]);
  }

  std::istringstream init(require("initial"));
  std::string kind;
  init >> kind;
  std::string rest;
  std::getline(init, rest);
  const auto nums = detail::parse_numbers(rest, "initial");
  if (kind == "dirac") {
    if (nums.size() != n) throw std::invalid_argument("initial dirac: expected " + std::to_string(n) + " coordinates");
    p.initial = DiracInitial{t0, nums};
  } else if (kind == "uniform") {
    if (nums.size() != 2 * n) throw std::invalid_argument("initial uniform: expected lo hi per state");
    UniformInitial u{t0, {}};
    for (std::size_t i = 0; i < n; ++i) u.box.intervals.push_back({nums[2 * i], nums[2 * i + 1]});
    p.initial = u;
  } else {
    throw std::invalid_argument("initial: kind must be 'dirac' or 'uniform'");
  }

  if (!kv.empty()) throw std::invalid_argument("unknown key '" + kv.begin()->first + "'");
  p.validate();
  return p;
}

inline ControlProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open problem file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string stem = path;
  if (auto slash = stem.find_last_of('/'); slash != std::string::npos) stem.erase(0, slash + 1);
  if (auto dot = stem.find_last_of('.'); dot != std::string::npos) stem.erase(dot);
  return parse_problem(ss.str(), stem);
}

/// Serialize in the problem-file format (parse_problem(to_text(p)) reproduces p).
inline std::string to_text(const ControlProblem& p) {
  using detail::format_number;
  std::ostringstream o;
  const std::size_t n = p.space.n_state(), m = p.space.m_control();
  o << "n = " << n << "\nm = " << m << "\nt0 = " << format_number(p.t0()) << "\nT = " << format_number(p.T) << "\n";
  for (std::size_t i = 0; i < n; ++i) o << "f" << i + 1 << " = " << format(p.f[i]) << "\n";
  o << "l = " << format(p.l) << "\nl_T = " << format(p.l_T) << "\n";
  auto box = [&](const char* key, const SemialgebraicBox& b) {
    for (std::size_t i = 0; i < b.dim(); ++i)
      o << key << i + 1 << " = " << format_number(b.intervals[i].lo) << " " << format_number(b.intervals[i].hi) << "\n";
  };
  box("X", p.X);
  box("U", p.U);
  box("XT", p.X_T);
  if (const auto* d = std::get_if<DiracInitial>(&p.initial)) {
    o << "initial = dirac";
    for (double v : d->x0) o << " " << format_number(v);
  } else {
    o << "initial = uniform";
    for (const auto& iv : std::get<UniformInitial>(p.initial).box.intervals)
      o << " " << format_number(iv.lo) << " " << format_number(iv.hi);
  }
  o << "\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Builtin benchmarks. The box choices are engineering decisions; they are kept
// here, in problem-file form, and mirrored in problems/*.pocp.

namespace builtin_text {

// Turnpike. The unconstrained optimal flow from (0,0) ends at x(2) = 3
// (rise with u=0, arc at (1,2), final u=0 arc of length ln 2), so X leaves
// 0.5 of margin above it.
inline constexpr std::string_view turnpike = R"(# one-dimensional turnpike
n = 1
m = 1
t0 = 0
T = 2
f1 = 1 + x1 - x1*u1
l = x1 + u1
l_T = 0
X1 = 0 3.5
U1 = 0 3
XT1 = 0 3.5
initial = dirac 0
)";

// LQR. |u*| = P(t)|x| <= (1 + sqrt(11)) * 1.2 < 5.2, so U = [-6, 6] never saturates.
inline constexpr std::string_view lqr_averaged = R"(# linear quadratic regulator, uniform initial states
n = 1
m = 1
t0 = 0
T = 1
f1 = x1 + u1
l = 10*x1^2 + u1^2
l_T = 0
X1 = -1.2 1.2
U1 = -6 6
XT1 = -1.2 1.2
initial = uniform -1 1
)";

inline constexpr std::string_view lqr_dirac = R"(# linear quadratic regulator from x0 = 0.5
n = 1
m = 1
t0 = 0
T = 1
f1 = x1 + u1
l = 10*x1^2 + u1^2
l_T = 0
X1 = -1.2 1.2
U1 = -6 6
XT1 = -1.2 1.2
initial = dirac 0.5
)";

// Frozen state: the value is l_T(x0) = 0.25.
inline constexpr std::string_view frozen = R"(# no dynamics, terminal cost only
n = 1
m = 1
t0 = 0
T = 1
f1 = 0
l = 0
l_T = x1^2
X1 = -1 1
U1 = -1 1
XT1 = -1 1
initial = dirac 0.5
)";

}  // namespace builtin_text

inline ControlProblem builtin_turnpike() { return parse_problem(builtin_text::turnpike, "turnpike"); }

enum class InitialMode { Dirac, Averaged };

inline ControlProblem builtin_lqr(InitialMode mode = InitialMode::Averaged) {
  return mode == InitialMode::Averaged ? parse_problem(builtin_text::lqr_averaged, "lqr")
                                       : parse_problem(builtin_text::lqr_dirac, "lqr");
}

inline ControlProblem builtin_frozen() { return parse_problem(builtin_text::frozen, "frozen"); }

inline ControlProblem builtin_problem(const std::string& name, InitialMode mode) {
  if (name == "turnpike") return builtin_turnpike();
  if (name == "lqr") return builtin_lqr(mode);
  if (name == "frozen") return builtin_frozen();
  throw std::invalid_argument("unknown builtin '" + name + "' (expected turnpike, lqr or frozen)");
}

// ---------------------------------------------------------------------------
// Affine scaling.

/// Problem rescaled so that t in [0,1] and every state/control interval of X, U
/// is [-1,1]. Dynamics are multiplied by (T - t0) / w_i and the running cost by
/// (T - t0), so objective values are unchanged.
struct ScaledProblem {
  ControlProblem original;
  ControlProblem scaled;
  double t0 = 0.0;
  double horizon = 1.0;  // T - t0
  std::vector<double> center;  // per variable (index 0 unused)
  std::vector<double> half_width;

  /// (t, x, u) in original coordinates -> scaled coordinates.
  std::vector<double> to_scaled(std::span<const double> point) const {
    std::vector<double> s(point.size());
    s[0] = (point[0] - t0) / horizon;
    for (std::size_t k = 1; k < point.size(); ++k) s[k] = (point[k] - center[k]) / half_width[k];
    return s;
  }
  std::vector<double> from_scaled(std::span<const double> point) const {
    std::vector<double> o(point.size());
    o[0] = t0 + horizon * point[0];
    for (std::size_t k = 1; k < point.size(); ++k) o[k] = center[k] + half_width[k] * point[k];
    return o;
  }

  /// Express a polynomial given in original coordinates in scaled coordinates.
  Polynomial to_scaled(const Polynomial& p) const {
    const VariableSpace& sp = p.space();
    std::vector<Polynomial> img;
    img.push_back(Polynomial::constant(sp, t0) + horizon * Polynomial::variable(sp, 0));
    for (std::size_t k = 1; k < sp.size(); ++k)
      img.push_back(Polynomial::constant(sp, center[k]) + half_width[k] * Polynomial::variable(sp, k));
    return substitute(p, img);
  }

  /// Pull a polynomial given in scaled coordinates back to original coordinates.
  Polynomial from_scaled(const Polynomial& p) const {
    const VariableSpace& sp = p.space();
    std::vector<Polynomial> img;
    img.push_back((Polynomial::variable(sp, 0) - Polynomial::constant(sp, t0)) * (1.0 / horizon));
    for (std::size_t k = 1; k < sp.size(); ++k)
      img.push_back((Polynomial::variable(sp, k) - Polynomial::constant(sp, center[k])) * (1.0 / half_width[k]));
    return substitute(p, img);
  }
};

inline ScaledProblem scale(const ControlProblem& problem) {
  problem.validate();
  const VariableSpace& sp = problem.space;
  ScaledProblem s;
  s.original = problem;
  s.t0 = problem.t0();
  s.horizon = problem.T - s.t0;
  s.center.assign(sp.size(), 0.0);
  s.half_width.assign(sp.size(), 1.0);
  for (std::size_t i = 0; i < sp.n_state(); ++i) {
    s.center[sp.state(i)] = problem.X.intervals[i].center();
    s.half_width[sp.state(i)] = problem.X.intervals[i].half_width();
  }
  for (std::size_t j = 0; j < sp.m_control(); ++j) {
    s.center[sp.control(j)] = problem.U.intervals[j].center();
    s.half_width[sp.control(j)] = problem.U.intervals[j].half_width();
  }

  ControlProblem& q = s.scaled;
  q.name = problem.name;
  q.space = sp;
  for (std::size_t i = 0; i < sp.n_state(); ++i)
    q.f.push_back(s.to_scaled(problem.f[i]) * (s.horizon / s.half_width[sp.state(i)]));
  q.l = s.to_scaled(problem.l) * s.horizon;
  q.l_T = s.to_scaled(problem.l_T);
  auto map_box = [&](const SemialgebraicBox& b, std::size_t first_var) {
    SemialgebraicBox r;
    for (std::size_t i = 0; i < b.dim(); ++i) {
      const double c = s.center[first_var + i], w = s.half_width[first_var + i];
      r.intervals.push_back({(b.intervals[i].lo - c) / w, (b.intervals[i].hi - c) / w});
    }
    return r;
  };
  q.X = map_box(problem.X, sp.state(0));
  q.X_T = map_box(problem.X_T, sp.state(0));
  q.U = map_box(problem.U, sp.m_control() > 0 ? sp.control(0) : sp.size());
  q.T = 1.0;
  if (const auto* d = std::get_if<DiracInitial>(&problem.initial)) {
    DiracInitial sd{0.0, {}};
    for (std::size_t i = 0; i < sp.n_state(); ++i)
      sd.x0.push_back((d->x0[i] - s.center[sp.state(i)]) / s.half_width[sp.state(i)]);
    q.initial = sd;
  } else {
    q.initial = UniformInitial{0.0, map_box(std::get<UniformInitial>(problem.initial).box, sp.state(0))};
  }
  // Round-off can push endpoints a hair outside [-1, 1].
  for (auto* box : {&q.X, &q.X_T, &q.U})
    for (auto& iv : box->intervals) {
      if (std::abs(iv.lo + 1.0) < 1e-14) iv.lo = -1.0;
      if (std::abs(iv.hi - 1.0) < 1e-14) iv.hi = 1.0;
    }
  q.validate();
  return s;
}

// ---------------------------------------------------------------------------

/// Moments of the initial measure for monomials t^a x^beta (no controls).
inline std::vector<double> initial_moments(const ControlProblem& problem, std::span<const Monomial> basis) {
  const VariableSpace& sp = problem.space;
  const double t0 = problem.t0();
  if (const auto* u = std::get_if<UniformInitial>(&problem.initial))
    if (!problem.X.contains(u->box)) throw std::invalid_argument("initial box not contained in the state box");
  std::vector<double> out;
  out.reserve(basis.size());
  for (const Monomial& mono : basis) {
    if (mono.size() != sp.size()) throw std::invalid_argument("basis monomial has wrong arity");
    for (std::size_t j = 0; j < sp.m_control(); ++j)
      if (mono[sp.control(j)] != 0) throw std::invalid_argument("initial moments are over (t, x) only");
    double v = std::pow(t0, mono[0]);
    for (std::size_t i = 0; i < sp.n_state(); ++i) {
      const unsigned k = mono[sp.state(i)];
      if (const auto* d = std::get_if<DiracInitial>(&problem.initial)) {
        v *= std::pow(d->x0[i], k);
      } else {
        const Interval& iv = std::get<UniformInitial>(problem.initial).box.intervals[i];
        v *= (std::pow(iv.hi, k + 1) - std::pow(iv.lo, k + 1)) / ((k + 1) * (iv.hi - iv.lo));
      }
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace occmom
