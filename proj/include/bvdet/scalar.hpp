#pragma once

#include <gmpxx.h>

#include <complex>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace bvdet {

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Rat = mpq_class;
using Cplx = std::complex<double>;

inline Rat rat_of(long num, long den = 1) {
  Rat r(num, den);
  r.canonicalize();
  return r;
}

inline Rat rat_of(const Rat& r) { return r; }

// "p/q" or "p"; also accepts a plain integer with sign.
inline Rat parse_rat(const std::string& s) {
  if (s.empty()) throw SchemaError("empty rational literal");
  for (char c : s)
    if (!(std::isdigit((unsigned char)c) || c == '-' || c == '+' || c == '/'))
      throw SchemaError("bad rational literal: " + s);
  Rat r;
  if (r.set_str(s, 10) != 0) throw SchemaError("bad rational literal: " + s);
  if (r.get_den() == 0) throw SchemaError("zero denominator: " + s);
  r.canonicalize();
  return r;
}

inline std::string rat_str(const Rat& r) { return r.get_str(); }

// Gaussian rational a + b*i, used whenever an exact computation needs a
// complex structure.
struct GaussRat {
  Rat re{0}, im{0};

  GaussRat() = default;
  GaussRat(int v) : re(v) {}
  GaussRat(const Rat& r) : re(r) {}
  GaussRat(Rat r, Rat i) : re(std::move(r)), im(std::move(i)) {}

  friend GaussRat operator+(const GaussRat& a, const GaussRat& b) {
    return {a.re + b.re, a.im + b.im};
  }
  friend GaussRat operator-(const GaussRat& a, const GaussRat& b) {
    return {a.re - b.re, a.im - b.im};
  }
  friend GaussRat operator-(const GaussRat& a) { return {-a.re, -a.im}; }
  friend GaussRat operator*(const GaussRat& a, const GaussRat& b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
  }
  friend GaussRat operator/(const GaussRat& a, const GaussRat& b) {
    Rat n = b.re * b.re + b.im * b.im;
    if (n == 0) throw InvalidInput("division by zero");
    return {(a.re * b.re + a.im * b.im) / n, (a.im * b.re - a.re * b.im) / n};
  }
  GaussRat& operator+=(const GaussRat& b) { return *this = *this + b; }
  GaussRat& operator-=(const GaussRat& b) { return *this = *this - b; }
  GaussRat& operator*=(const GaussRat& b) { return *this = *this * b; }
  GaussRat& operator/=(const GaussRat& b) { return *this = *this / b; }
  friend bool operator==(const GaussRat& a, const GaussRat& b) {
    return a.re == b.re && a.im == b.im;
  }
  friend bool operator!=(const GaussRat& a, const GaussRat& b) { return !(a == b); }
};

inline Rat rat_of(const GaussRat& g) {
  if (g.im != 0) throw InvalidInput("expected a real scalar");
  return g.re;
}

// Uniform scalar interface for Rat, GaussRat and complex<double>.
template <class S>
struct ScalarOps;

template <>
struct ScalarOps<Rat> {
  static constexpr bool exact = true;
  static Rat zero() { return Rat(0); }
  static Rat one() { return Rat(1); }
  static Rat from_int(long v) { return Rat(v); }
  static Rat from_rat(const Rat& v) { return v; }
  static Rat conj(const Rat& v) { return v; }
  static bool is_zero(const Rat& v, double = 0) { return v == 0; }
  static double mag(const Rat& v) { return std::abs(v.get_d()); }
  static Rat pivot_weight(const Rat& v) { return abs(v); }
  static std::string str(const Rat& v) { return rat_str(v); }
};

template <>
struct ScalarOps<GaussRat> {
  static constexpr bool exact = true;
  static GaussRat zero() { return GaussRat(); }
  static GaussRat one() { return GaussRat(1); }
  static GaussRat from_int(long v) { return GaussRat(Rat(v)); }
  static GaussRat from_rat(const Rat& v) { return GaussRat(v); }
  static GaussRat conj(const GaussRat& v) { return {v.re, -v.im}; }
  static bool is_zero(const GaussRat& v, double = 0) { return v.re == 0 && v.im == 0; }
  static double mag(const GaussRat& v) {
    return std::abs(v.re.get_d()) + std::abs(v.im.get_d());
  }
  static Rat pivot_weight(const GaussRat& v) { return abs(v.re) + abs(v.im); }
  static std::string str(const GaussRat& v) {
    if (v.im == 0) return rat_str(v.re);
    std::string s = rat_str(v.re);
    s += (v.im < 0 ? "-" : "+");
    s += rat_str(abs(v.im));
    s += "*i";
    return s;
  }
};

template <>
struct ScalarOps<Cplx> {
  static constexpr bool exact = false;
  static Cplx zero() { return {0, 0}; }
  static Cplx one() { return {1, 0}; }
  static Cplx from_int(long v) { return {double(v), 0}; }
  static Cplx from_rat(const Rat& v) { return {v.get_d(), 0}; }
  static Cplx conj(const Cplx& v) { return std::conj(v); }
  static bool is_zero(const Cplx& v, double tol = 0) { return std::abs(v) <= tol; }
  static double mag(const Cplx& v) { return std::abs(v); }
  static double pivot_weight(const Cplx& v) { return std::abs(v); }
  static std::string str(const Cplx& v) {
    std::ostringstream os;
    os.precision(17);
    os << v.real();
    if (v.imag() != 0) os << (v.imag() < 0 ? "-" : "+") << std::abs(v.imag()) << "i";
    return os.str();
  }
};

// "a/b", "a/b+c/d*i", "-c/d*i" and friends.
inline GaussRat parse_gauss(const std::string& s) {
  auto star = s.find("*i");
  if (star == std::string::npos) return GaussRat(parse_rat(s));
  // split off the trailing imaginary term
  size_t split = std::string::npos;
  for (size_t i = star; i-- > 1;) {
    if ((s[i] == '+' || s[i] == '-') && s[i - 1] != '/' && s[i - 1] != '+' && s[i - 1] != '-') {
      split = i;
      break;
    }
  }
  if (split == std::string::npos)
    return GaussRat(Rat(0), parse_rat(s.substr(0, star)));
  Rat re = parse_rat(s.substr(0, split));
  std::string imtxt = s.substr(split, star - split);
  if (imtxt == "+") imtxt = "1";
  if (imtxt == "-") imtxt = "-1";
  return GaussRat(re, parse_rat(imtxt));
}

}  // namespace bvdet
