#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bvdet/scalar.hpp"

namespace bvdet {

// Generator layout of the bigraded coordinate ring: n generators x_1..x_n of
// bidegree (0, odd) that square to zero, and m generators xi_1..xi_m of
// bidegree (-1, odd) that commute among themselves and admit powers.
// Two homogeneous factors of bidegree (d1,p1), (d2,p2) commute up to the
// sign (-1)^(d1*d2 + p1*p2).
struct GenSpec {
  int n = 0;
  int m = 0;
  bool operator==(const GenSpec&) const = default;
};

inline int parity_of(int v) { return ((v % 2) + 2) % 2; }

// Canonical monomial: ascending x factors, then ascending xi powers.
// xi holds (index, exponent) pairs sorted by index with exponent >= 1.
struct Monomial {
  uint64_t xmask = 0;
  std::vector<std::pair<int, int>> xi;

  int xdeg() const { return std::popcount(xmask); }
  int xideg() const {
    int s = 0;
    for (auto& [i, e] : xi) s += e;
    return s;
  }
  int degree() const { return -xideg(); }
  int parity() const { return (xdeg() + xideg()) & 1; }
  bool is_one() const { return xmask == 0 && xi.empty(); }

  auto key() const { return std::tie(xmask, xi); }
  bool operator<(const Monomial& o) const { return key() < o.key(); }
  bool operator==(const Monomial& o) const { return key() == o.key(); }
};

// Product of two canonical monomials. Returns nothing when the product
// vanishes (a shared x factor). Otherwise gives the Koszul sign picked up
// while reordering into canonical form:
//   - B's x block moves left past A's xi block, one flip per (x, xi) pair;
//   - interleaving the two ascending x blocks flips once per inversion;
//   - xi factors commute, exponents just add.
inline std::optional<std::pair<int, Monomial>> mono_mul(const Monomial& A, const Monomial& B) {
  if (A.xmask & B.xmask) return std::nullopt;
  long flips = long(std::popcount(B.xmask)) * A.xideg();
  for (uint64_t bm = B.xmask; bm; bm &= bm - 1) {
    int b = std::countr_zero(bm);
    if (b < 63) flips += std::popcount(A.xmask >> (b + 1));
  }
  Monomial out;
  out.xmask = A.xmask | B.xmask;
  out.xi.reserve(A.xi.size() + B.xi.size());
  size_t i = 0, j = 0;
  while (i < A.xi.size() && j < B.xi.size()) {
    if (A.xi[i].first < B.xi[j].first)
      out.xi.push_back(A.xi[i++]);
    else if (B.xi[j].first < A.xi[i].first)
      out.xi.push_back(B.xi[j++]);
    else {
      out.xi.emplace_back(A.xi[i].first, A.xi[i].second + B.xi[j].second);
      i++, j++;
    }
  }
  while (i < A.xi.size()) out.xi.push_back(A.xi[i++]);
  while (j < B.xi.size()) out.xi.push_back(B.xi[j++]);
  return std::make_pair((flips & 1) ? -1 : 1, out);
}

template <class S>
struct Element {
  GenSpec spec;
  std::map<Monomial, S> terms;

  Element() = default;
  explicit Element(GenSpec sp) : spec(sp) {}

  static Element scalar(GenSpec sp, const S& c) {
    Element e(sp);
    if (!ScalarOps<S>::is_zero(c)) e.terms[Monomial{}] = c;
    return e;
  }
  static Element monomial(GenSpec sp, const Monomial& mo, const S& c) {
    Element e(sp);
    if (!ScalarOps<S>::is_zero(c)) e.terms[mo] = c;
    return e;
  }
  static Element gen_x(GenSpec sp, int i) {
    if (i < 0 || i >= sp.n) throw InvalidInput("x generator index out of range");
    Monomial mo;
    mo.xmask = uint64_t(1) << i;
    return monomial(sp, mo, ScalarOps<S>::one());
  }
  static Element gen_xi(GenSpec sp, int j) {
    if (j < 0 || j >= sp.m) throw InvalidInput("xi generator index out of range");
    Monomial mo;
    mo.xi = {{j, 1}};
    return monomial(sp, mo, ScalarOps<S>::one());
  }

  bool zero() const { return terms.empty(); }

  void add_term(const Monomial& mo, const S& c) {
    auto it = terms.find(mo);
    if (it == terms.end()) {
      if (!ScalarOps<S>::is_zero(c)) terms.emplace(mo, c);
      return;
    }
    it->second += c;
    if (ScalarOps<S>::is_zero(it->second)) terms.erase(it);
  }

  Element& operator+=(const Element& o) {
    check_spec(o);
    for (auto& [mo, c] : o.terms) add_term(mo, c);
    return *this;
  }
  Element& operator-=(const Element& o) {
    check_spec(o);
    for (auto& [mo, c] : o.terms) add_term(mo, -c);
    return *this;
  }
  friend Element operator+(Element a, const Element& b) { return a += b; }
  friend Element operator-(Element a, const Element& b) { return a -= b; }
  friend Element operator-(const Element& a) {
    Element r(a.spec);
    for (auto& [mo, c] : a.terms) r.terms.emplace(mo, -c);
    return r;
  }
  friend Element operator*(const S& c, const Element& a) {
    Element r(a.spec);
    if (ScalarOps<S>::is_zero(c)) return r;
    for (auto& [mo, v] : a.terms) {
      S w = c * v;
      if (!ScalarOps<S>::is_zero(w)) r.terms.emplace(mo, w);
    }
    return r;
  }
  friend Element operator*(const Element& a, const Element& b) {
    a.check_spec(b);
    Element r(a.spec);
    for (auto& [ma, ca] : a.terms)
      for (auto& [mb, cb] : b.terms) {
        auto p = mono_mul(ma, mb);
        if (!p) continue;
        S c = ca * cb;
        if (p->first < 0) c = -c;
        r.add_term(p->second, c);
      }
    return r;
  }

  bool operator==(const Element& o) const { return spec == o.spec && terms == o.terms; }

  // drop terms whose coefficients fell below tol (numeric hygiene)
  void cleanup(double tol) {
    for (auto it = terms.begin(); it != terms.end();)
      it = ScalarOps<S>::is_zero(it->second, tol) ? terms.erase(it) : std::next(it);
  }

  double max_mag() const {
    double m = 0;
    for (auto& [mo, c] : terms) m = std::max(m, ScalarOps<S>::mag(c));
    return m;
  }

  S coeff(const Monomial& mo) const {
    auto it = terms.find(mo);
    return it == terms.end() ? ScalarOps<S>::zero() : it->second;
  }

  // coefficient of x_1...x_n with no xi factors
  S top_x_coeff() const {
    Monomial top;
    top.xmask = (spec.n >= 64) ? ~uint64_t(0) : ((uint64_t(1) << spec.n) - 1);
    return coeff(top);
  }

  bool is_homogeneous(int deg, int par) const {
    for (auto& [mo, c] : terms)
      if (mo.degree() != deg || mo.parity() != par) return false;
    return true;
  }
  // single bidegree shared by all terms, if any (zero element matches all)
  std::optional<std::pair<int, int>> bidegree() const {
    std::optional<std::pair<int, int>> bd;
    for (auto& [mo, c] : terms) {
      std::pair<int, int> cur{mo.degree(), mo.parity()};
      if (!bd)
        bd = cur;
      else if (*bd != cur)
        return std::nullopt;
    }
    return bd ? bd : std::optional<std::pair<int, int>>{{0, 0}};
  }

  Element degree_part(int deg) const {
    Element r(spec);
    for (auto& [mo, c] : terms)
      if (mo.degree() == deg) r.terms.emplace(mo, c);
    return r;
  }
  Element truncate_xi(int maxdeg) const {
    Element r(spec);
    for (auto& [mo, c] : terms)
      if (mo.xideg() <= maxdeg) r.terms.emplace(mo, c);
    return r;
  }

  Element pow(int k) const {
    Element r = scalar(spec, ScalarOps<S>::one());
    for (int i = 0; i < k; i++) r = r * (*this);
    return r;
  }

  std::string str() const {
    if (terms.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (auto& [mo, c] : terms) {
      if (!first) os << " + ";
      first = false;
      os << "(" << ScalarOps<S>::str(c) << ")";
      for (uint64_t mk = mo.xmask; mk; mk &= mk - 1) os << "*x" << (std::countr_zero(mk) + 1);
      for (auto& [i, e] : mo.xi) {
        os << "*q" << (i + 1);
        if (e > 1) os << "^" << e;
      }
    }
    return os.str();
  }

  void check_spec(const Element& o) const {
    if (!(spec == o.spec)) throw InvalidInput("mixed generator layouts");
  }
};

// exp of an even element whose powers terminate (e.g. a quadratic form in
// the x generators). Throws if the series fails to terminate.
template <class S>
Element<S> exp_nilpotent(const Element<S>& f, int max_pow = 200) {
  for (auto& [mo, c] : f.terms)
    if (mo.parity() != 0) throw InvalidInput("exp of an odd element");
  Element<S> acc = Element<S>::scalar(f.spec, ScalarOps<S>::one());
  Element<S> term = acc;
  for (int k = 1; k <= max_pow; k++) {
    term = term * f;
    if constexpr (ScalarOps<S>::exact) {
      term = (ScalarOps<S>::one() / ScalarOps<S>::from_int(k)) * term;
    } else {
      term = (ScalarOps<S>::one() / ScalarOps<S>::from_int(k)) * term;
      term.cleanup(1e-300);
    }
    if (term.zero()) return acc;
    acc += term;
  }
  throw InvalidInput("exp series did not terminate");
}

// First-order operator determined by generator images and the graded Leibniz
// rule. op_degree / op_parity give its bidegree; jumping it over a prefix of
// bidegree (d,p) costs (-1)^(op_degree*d + op_parity*p).
template <class S>
struct Derivation {
  GenSpec spec;
  int op_degree = 0;
  int op_parity = 0;
  std::vector<Element<S>> dx;
  std::vector<Element<S>> dxi;

  Derivation() = default;
  Derivation(GenSpec sp, int deg, int par)
      : spec(sp),
        op_degree(deg),
        op_parity(parity_of(par)),
        dx(sp.n, Element<S>(sp)),
        dxi(sp.m, Element<S>(sp)) {}

  void validate() const {
    for (int i = 0; i < spec.n; i++)
      if (!dx[i].is_homogeneous(op_degree, parity_of(1 + op_parity)))
        throw InvalidInput("x image has wrong bidegree");
    for (int j = 0; j < spec.m; j++)
      if (!dxi[j].is_homogeneous(op_degree - 1, parity_of(1 + op_parity)))
        throw InvalidInput("xi image has wrong bidegree");
  }

  Element<S> apply_mono(const Monomial& mono, const S& coef) const {
    Element<S> out(spec);
    std::vector<int> xs;
    for (uint64_t mk = mono.xmask; mk; mk &= mk - 1) xs.push_back(std::countr_zero(mk));
    int degp = parity_of(op_degree);
    // x slots: the prefix is t earlier x factors, bidegree (0, t)
    for (size_t t = 0; t < xs.size(); t++) {
      const Element<S>& img = dx[xs[t]];
      if (img.zero()) continue;
      int sgn = (op_parity * int(t)) & 1 ? -1 : 1;
      Monomial pre, suf;
      for (size_t u = 0; u < t; u++) pre.xmask |= uint64_t(1) << xs[u];
      for (size_t u = t + 1; u < xs.size(); u++) suf.xmask |= uint64_t(1) << xs[u];
      suf.xi = mono.xi;
      S c = coef;
      if (sgn < 0) c = -c;
      out += Element<S>::monomial(spec, pre, c) * img *
             Element<S>::monomial(spec, suf, ScalarOps<S>::one());
    }
    // xi blocks: all insertion slots inside one power collapse onto a single
    // term with multiplicity e, because the per-slot Leibniz sign cancels the
    // reordering sign of the image against the remaining xi factors.
    int k = int(xs.size());
    int s = 0;
    for (size_t bi = 0; bi < mono.xi.size(); bi++) {
      auto [idx, e] = mono.xi[bi];
      const Element<S>& img = dxi[idx];
      if (!img.zero()) {
        int sgn = (degp * s + op_parity * (k + s)) & 1 ? -1 : 1;
        Monomial pre, suf;
        pre.xmask = mono.xmask;
        pre.xi.assign(mono.xi.begin(), mono.xi.begin() + bi);
        if (e > 1) suf.xi.emplace_back(idx, e - 1);
        suf.xi.insert(suf.xi.end(), mono.xi.begin() + bi + 1, mono.xi.end());
        S c = coef * ScalarOps<S>::from_int(e);
        if (sgn < 0) c = -c;
        out += Element<S>::monomial(spec, pre, c) * img *
               Element<S>::monomial(spec, suf, ScalarOps<S>::one());
      }
      s += e;
    }
    return out;
  }

  Element<S> apply(const Element<S>& f) const {
    if (!(f.spec == spec)) throw InvalidInput("mixed generator layouts");
    Element<S> out(spec);
    for (auto& [mo, c] : f.terms) out += apply_mono(mo, c);
    return out;
  }
};

template <class S>
Derivation<S> partial_x(GenSpec sp, int i) {
  Derivation<S> d(sp, 0, 1);
  d.dx[i] = Element<S>::scalar(sp, ScalarOps<S>::one());
  return d;
}
template <class S>
Derivation<S> partial_xi(GenSpec sp, int j) {
  Derivation<S> d(sp, 1, 1);
  d.dxi[j] = Element<S>::scalar(sp, ScalarOps<S>::one());
  return d;
}

// Second-order operator assembled from pair rules: sum of c * d_second(d_first(.))
// where each slot is a basic partial derivative in one generator.
struct GenRef {
  enum Kind { X, XI } kind = X;
  int idx = 0;
};

template <class S>
struct SecondOrderOp {
  GenSpec spec;
  struct Rule {
    GenRef first, second;
    S coeff;
  };
  std::vector<Rule> rules;

  explicit SecondOrderOp(GenSpec sp = {}) : spec(sp) {}

  Element<S> apply(const Element<S>& f) const {
    if (!(f.spec == spec)) throw InvalidInput("mixed generator layouts");
    Element<S> out(spec);
    for (const Rule& r : rules) {
      Derivation<S> d1 = r.first.kind == GenRef::X ? partial_x<S>(spec, r.first.idx)
                                                   : partial_xi<S>(spec, r.first.idx);
      Derivation<S> d2 = r.second.kind == GenRef::X ? partial_x<S>(spec, r.second.idx)
                                                    : partial_xi<S>(spec, r.second.idx);
      out += r.coeff * d2.apply(d1.apply(f));
    }
    return out;
  }
};

// the odd Laplacian: sum_i d_xi_i ( d_x_i ( . ) ), so that x_i xi_i |-> 1
template <class S>
SecondOrderOp<S> odd_laplacian(GenSpec sp) {
  if (sp.n != sp.m) throw InvalidInput("odd laplacian needs matching generator counts");
  SecondOrderOp<S> op(sp);
  for (int i = 0; i < sp.n; i++)
    op.rules.push_back({GenRef{GenRef::X, i}, GenRef{GenRef::XI, i}, ScalarOps<S>::one()});
  return op;
}

// Algebra map determined by generator images; images must carry the same
// bidegree as the generators they replace.
template <class S>
struct Substitution {
  GenSpec src, dst;
  std::vector<Element<S>> fx;
  std::vector<Element<S>> fxi;

  Substitution() = default;
  Substitution(GenSpec s, GenSpec d)
      : src(s), dst(d), fx(s.n, Element<S>(d)), fxi(s.m, Element<S>(d)) {}

  void validate() const {
    for (int i = 0; i < src.n; i++)
      if (!fx[i].is_homogeneous(0, 1)) throw InvalidInput("x image must have bidegree (0, odd)");
    for (int j = 0; j < src.m; j++)
      if (!fxi[j].is_homogeneous(-1, 1))
        throw InvalidInput("xi image must have bidegree (-1, odd)");
  }

  Element<S> apply_mono(const Monomial& mono, const S& coef) const {
    Element<S> out = Element<S>::scalar(dst, coef);
    for (uint64_t mk = mono.xmask; mk; mk &= mk - 1) {
      out = out * fx[std::countr_zero(mk)];
      if (out.zero()) return out;
    }
    for (auto& [j, e] : mono.xi) {
      out = out * fxi[j].pow(e);
      if (out.zero()) return out;
    }
    return out;
  }

  Element<S> apply(const Element<S>& f) const {
    if (!(f.spec == src)) throw InvalidInput("substitution source layout mismatch");
    Element<S> out(dst);
    for (auto& [mo, c] : f.terms) out += apply_mono(mo, c);
    return out;
  }
};

// All canonical monomials with xi-degree exactly k (so Z-degree -k).
inline std::vector<Monomial> monomials_of_xi_degree(const GenSpec& sp, int k) {
  std::vector<std::vector<std::pair<int, int>>> xiparts;
  std::vector<std::pair<int, int>> cur;
  // multisets of size k from m symbols, as sorted (index, exponent) runs
  auto rec = [&](auto&& self, int from, int left) -> void {
    if (left == 0) {
      xiparts.push_back(cur);
      return;
    }
    for (int i = from; i < sp.m; i++)
      for (int e = 1; e <= left; e++) {
        cur.emplace_back(i, e);
        self(self, i + 1, left - e);
        cur.pop_back();
      }
  };
  rec(rec, 0, k);
  std::vector<Monomial> out;
  for (uint64_t mask = 0; mask < (uint64_t(1) << sp.n); mask++)
    for (auto& xp : xiparts) {
      Monomial mo;
      mo.xmask = mask;
      mo.xi = xp;
      out.push_back(mo);
    }
  return out;
}

// Basis of the xi-degree <= N truncation, listed stratum by stratum.
inline std::vector<Monomial> truncated_basis(const GenSpec& sp, int N) {
  std::vector<Monomial> out;
  for (int k = 0; k <= N; k++) {
    auto part = monomials_of_xi_degree(sp, k);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace bvdet
