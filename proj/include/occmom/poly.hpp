#pragma once

// Sparse multivariate polynomials over the fixed variable set (t, x1..xn, u1..um).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace occmom {

/// Ordered variable set: "t", then x1..xn, then u1..um.
class VariableSpace {
 public:
  VariableSpace() = default;
  VariableSpace(std::size_t n_state, std::size_t m_control) : n_(n_state), m_(m_control) {}

  std::size_t n_state() const { return n_; }
  std::size_t m_control() const { return m_; }
  std::size_t size() const { return 1 + n_ + m_; }

  static constexpr std::size_t time() { return 0; }
  std::size_t state(std::size_t i) const { return 1 + i; }
  std::size_t control(std::size_t j) const { return 1 + n_ + j; }

  bool is_state(std::size_t var) const { return var >= 1 && var < 1 + n_; }
  bool is_control(std::size_t var) const { return var >= 1 + n_ && var < size(); }

  std::string name(std::size_t var) const {
    if (var == 0) return "t";
    if (is_state(var)) return "x" + std::to_string(var);
    if (is_control(var)) return "u" + std::to_string(var - n_);
    throw std::out_of_range("variable index " + std::to_string(var) + " outside space");
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < size(); ++k) out.push_back(name(k));
    return out;
  }

  /// Index of a variable name; throws std::invalid_argument when unknown.
  std::size_t index_of(std::string_view name) const {
    if (name == "t") return 0;
    if (name.size() >= 2 && (name[0] == 'x' || name[0] == 'u')) {
      std::size_t k = 0;
      for (char c : name.substr(1)) {
        if (!std::isdigit(static_cast<unsigned char>(c))) throw std::invalid_argument("unknown variable '" + std::string(name) + "'");
        k = 10 * k + static_cast<std::size_t>(c - '0');
      }
      if (name[0] == 'x' && k >= 1 && k <= n_) return state(k - 1);
      if (name[0] == 'u' && k >= 1 && k <= m_) return control(k - 1);
    }
    throw std::invalid_argument("unknown variable '" + std::string(name) + "'");
  }

  friend bool operator==(const VariableSpace&, const VariableSpace&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
};

/// Exponent vector, one entry per variable of a VariableSpace.
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(std::size_t num_vars) : exps_(num_vars, 0) {}
  explicit Monomial(std::vector<unsigned> exps) : exps_(std::move(exps)) {}

  static Monomial variable(std::size_t num_vars, std::size_t var, unsigned power = 1) {
    Monomial m(num_vars);
    m.exps_.at(var) = power;
    return m;
  }

  std::size_t size() const { return exps_.size(); }
  unsigned operator[](std::size_t k) const { return exps_[k]; }
  unsigned& operator[](std::size_t k) { return exps_[k]; }
  const std::vector<unsigned>& exponents() const { return exps_; }

  unsigned degree() const { return std::accumulate(exps_.begin(), exps_.end(), 0u); }

  Monomial operator*(const Monomial& o) const {
    Monomial r(*this);
    for (std::size_t k = 0; k < exps_.size(); ++k) r.exps_[k] += o.exps_[k];
    return r;
  }

  double evaluate(std::span<const double> point) const {
    double v = 1.0;
    for (std::size_t k = 0; k < exps_.size(); ++k)
      for (unsigned p = 0; p < exps_[k]; ++p) v *= point[k];
    return v;
  }

  friend bool operator==(const Monomial&, const Monomial&) = default;

 private:
  std::vector<unsigned> exps_;
};

/// Graded lexicographic order: total degree first, then the larger exponent on
/// the earlier variable comes first (so 1 < t < x1 < u1 < t^2 < t*x1 < ...).
struct GradedLex {
  bool operator()(const Monomial& a, const Monomial& b) const {
    const unsigned da = a.degree(), db = b.degree();
    if (da != db) return da < db;
    for (std::size_t k = 0; k < a.size(); ++k)
      if (a[k] != b[k]) return a[k] > b[k];
    return false;
  }
};

class Polynomial {
 public:
  using Terms = std::map<Monomial, double, GradedLex>;

  Polynomial() = default;
  explicit Polynomial(VariableSpace space) : space_(space) {}

  static Polynomial constant(VariableSpace space, double c) {
    Polynomial p(space);
    p.add_term(Monomial(space.size()), c);
    return p;
  }
  static Polynomial variable(VariableSpace space, std::size_t var) {
    Polynomial p(space);
    p.add_term(Monomial::variable(space.size(), var), 1.0);
    return p;
  }
  static Polynomial monomial(VariableSpace space, Monomial m, double c = 1.0) {
    Polynomial p(space);
    p.add_term(std::move(m), c);
    return p;
  }

  const VariableSpace& space() const { return space_; }
  const Terms& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  double coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
  }

  /// Maximum total degree over stored terms; the zero polynomial has degree 0.
  unsigned degree() const { return terms_.empty() ? 0u : terms_.rbegin()->first.degree(); }

  /// Largest exponent of a variable in any term.
  unsigned degree_in(std::size_t var) const {
    unsigned d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m[var]);
    return d;
  }

  bool depends_on(std::size_t var) const { return degree_in(var) > 0; }

  void add_term(Monomial m, double c) {
    if (m.size() != space_.size()) throw std::invalid_argument("monomial arity does not match variable space");
    if (c == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(std::move(m), c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  double evaluate(std::span<const double> point) const {
    if (point.size() != space_.size())
      throw std::invalid_argument("evaluation point has " + std::to_string(point.size()) + " coordinates, expected " +
                                  std::to_string(space_.size()));
    double v = 0.0;
    for (const auto& [m, c] : terms_) v += c * m.evaluate(point);
    return v;
  }
  double operator()(std::span<const double> point) const { return evaluate(point); }

  Polynomial& operator+=(const Polynomial& o) {
    check_space(o);
    for (const auto& [m, c] : o.terms_) add_term(m, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    check_space(o);
    for (const auto& [m, c] : o.terms_) add_term(m, -c);
    return *this;
  }
  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& [m, c] : terms_) c *= s;
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator-(Polynomial a) { return a *= -1.0; }
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check_space(b);
    Polynomial r(a.space_);
    for (const auto& [ma, ca] : a.terms_)
      for (const auto& [mb, cb] : b.terms_) r.add_term(ma * mb, ca * cb);
    return r;
  }
  Polynomial& operator*=(const Polynomial& o) { return *this = *this * o; }

  friend bool operator==(const Polynomial& a, const Polynomial& b) { return a.space_ == b.space_ && a.terms_ == b.terms_; }

 private:
  void check_space(const Polynomial& o) const {
    if (!(space_ == o.space_)) throw std::invalid_argument("polynomials live in different variable spaces");
  }

  VariableSpace space_;
  Terms terms_;
};

inline Polynomial scale(const Polynomial& p, double c) { return p * c; }

inline Polynomial pow(const Polynomial& p, unsigned k) {
  Polynomial r = Polynomial::constant(p.space(), 1.0);
  for (unsigned i = 0; i < k; ++i) r *= p;
  return r;
}

inline Polynomial partial_derivative(const Polynomial& p, std::size_t var) {
  if (var >= p.space().size()) throw std::invalid_argument("unknown variable index " + std::to_string(var));
  Polynomial r(p.space());
  for (const auto& [m, c] : p.terms()) {
    if (m[var] == 0) continue;
    Monomial d = m;
    d[var] -= 1;
    r.add_term(std::move(d), c * m[var]);
  }
  return r;
}

/// Lv = dv/dt + sum_i (dv/dx_i) f_i.
inline Polynomial apply_generator(const Polynomial& v, std::span<const Polynomial> f) {
  const VariableSpace& sp = v.space();
  for (std::size_t j = 0; j < sp.m_control(); ++j)
    if (v.depends_on(sp.control(j))) throw std::invalid_argument("generator argument must not depend on controls");
  if (f.size() != sp.n_state())
    throw std::invalid_argument("dynamics has " + std::to_string(f.size()) + " components, expected " + std::to_string(sp.n_state()));
  Polynomial r = partial_derivative(v, VariableSpace::time());
  for (std::size_t i = 0; i < f.size(); ++i) {
    Polynomial dvi = partial_derivative(v, sp.state(i));
    if (!dvi.is_zero()) r += dvi * f[i];
  }
  return r;
}

/// Replace every variable k by images[k] (all polynomials in the same space).
inline Polynomial substitute(const Polynomial& p, std::span<const Polynomial> images) {
  const VariableSpace& sp = p.space();
  if (images.size() != sp.size()) throw std::invalid_argument("substitution needs one image per variable");
  std::vector<std::vector<Polynomial>> powers(sp.size());
  for (std::size_t k = 0; k < sp.size(); ++k) {
    powers[k].push_back(Polynomial::constant(images[k].space(), 1.0));
    for (unsigned e = 1; e <= p.degree_in(k); ++e) powers[k].push_back(powers[k].back() * images[k]);
  }
  Polynomial r(images.empty() ? sp : images[0].space());
  for (const auto& [m, c] : p.terms()) {
    Polynomial term = Polynomial::constant(r.space(), c);
    for (std::size_t k = 0; k < sp.size(); ++k)
      if (m[k] > 0) term *= powers[k][m[k]];
    r += term;
  }
  return r;
}

/// Fix one variable to a value.
inline Polynomial restrict_variable(const Polynomial& p, std::size_t var, double value) {
  Polynomial r(p.space());
  for (const auto& [m, c] : p.terms()) {
    Monomial q = m;
    double s = c;
    for (unsigned e = 0; e < m[var]; ++e) s *= value;
    q[var] = 0;
    r.add_term(std::move(q), s);
  }
  return r;
}

namespace detail {
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Text form accepted by parse(); terms in graded lex order, 17 significant digits.
inline std::string format(const Polynomial& p) {
  if (p.is_zero()) return "0";
  std::string out;
  bool first = true;
  for (const auto& [m, c] : p.terms()) {
    double mag = c;
    if (first) {
      if (c < 0) {
        out += "-";
        mag = -c;
      }
    } else {
      out += c < 0 ? " - " : " + ";
      mag = std::abs(c);
    }
    first = false;
    std::string factors;
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (m[k] == 0) continue;
      if (!factors.empty()) factors += "*";
      factors += p.space().name(k);
      if (m[k] > 1) factors += "^" + std::to_string(m[k]);
    }
    if (factors.empty())
      out += detail::format_number(mag);
    else if (mag == 1.0)
      out += factors;
    else
      out += detail::format_number(mag) + "*" + factors;
  }
  return out;
}

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

namespace detail {

// expr := term (('+'|'-') term)* ; term := factor ('*' factor)* ;
// factor := number | ident ('^' uint)? | '(' expr ')' | '-' factor
class PolyParser {
 public:
  PolyParser(std::string_view text, const VariableSpace& space) : s_(text), space_(space) {}

  Polynomial parse() {
    Polynomial p = expr();
    skip_ws();
    if (pos_ != s_.size()) throw ParseError(std::string("unexpected '") + s_[pos_] + "'", pos_);
    return p;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Polynomial expr() {
    Polynomial p = term();
    for (;;) {
      if (accept('+'))
        p += term();
      else if (accept('-'))
        p -= term();
      else
        return p;
    }
  }

  Polynomial term() {
    Polynomial p = factor();
    while (accept('*')) p *= factor();
    return p;
  }

  Polynomial factor() {
    skip_ws();
    if (pos_ >= s_.size()) throw ParseError("unexpected end of expression", pos_);
    const char c = s_[pos_];
    if (c == '-') {
      ++pos_;
      return -factor();
    }
    if (c == '(') {
      ++pos_;
      Polynomial p = expr();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return p;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return Polynomial::constant(space_, number());
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string_view name = s_.substr(start, pos_ - start);
      std::size_t var = 0;
      try {
        var = space_.index_of(name);
      } catch (const std::invalid_argument&) {
        throw ParseError("unknown variable '" + std::string(name) + "'", start);
      }
      unsigned power = 1;
      if (accept('^')) power = exponent();
      return Polynomial::monomial(space_, Monomial::variable(space_.size(), var, power));
    }
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  unsigned exponent() {
    skip_ws();
    const std::size_t start = pos_;
    unsigned long v = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = 10 * v + static_cast<unsigned long>(s_[pos_] - '0');
      if (v > 1000) throw ParseError("exponent too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError("exponent must be a nonnegative integer literal", start);
    if (pos_ < s_.size() && (s_[pos_] == '.' || s_[pos_] == 'e' || s_[pos_] == 'E'))
      throw ParseError("exponent must be a nonnegative integer literal", start);
    return static_cast<unsigned>(v);
  }

  double number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t nd = digits();
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      nd += digits();
    }
    if (nd == 0) throw ParseError("malformed number", start);
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (digits() == 0) pos_ = save;
    }
    return std::stod(std::string(s_.substr(start, pos_ - start)));
  }

  std::string_view s_;
  const VariableSpace& space_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parse a polynomial expression; throws ParseError with the failing position.
inline Polynomial parse(std::string_view text, const VariableSpace& space) {
  return detail::PolyParser(text, space).parse();
}

}  // namespace occmom
