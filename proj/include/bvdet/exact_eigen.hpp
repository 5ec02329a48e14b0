#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bvdet/matrix.hpp"
#include "bvdet/scalar.hpp"

namespace bvdet {

// Characteristic polynomial by the Faddeev-LeVerrier recursion, monic,
// returned as coefficients c[0..n] with p(t) = sum_k c[k] t^k and c[n] = 1.
template <class S>
std::vector<S> char_poly(const Mat<S>& m) {
  static_assert(ScalarOps<S>::exact, "char_poly is an exact-mode tool");
  if (m.rows != m.cols) throw InvalidInput("characteristic polynomial of a non-square matrix");
  int n = m.rows;
  std::vector<S> c(n + 1, ScalarOps<S>::zero());
  c[n] = ScalarOps<S>::one();
  Mat<S> acc = Mat<S>::identity(n);
  for (int k = 1; k <= n; k++) {
    acc = m * acc;
    S tr = ScalarOps<S>::zero();
    for (int i = 0; i < n; i++) tr += acc.at(i, i);
    c[n - k] = -(tr / ScalarOps<S>::from_int(k));
    for (int i = 0; i < n; i++) acc.at(i, i) += c[n - k];
  }
  return c;
}

namespace detail {

inline std::vector<mpz_class> divisors_of(mpz_class v) {
  if (v < 0) v = -v;
  if (v == 0) throw std::logic_error("divisors of zero requested");
  std::map<mpz_class, int> fac;
  for (mpz_class p = 2; p * p <= v && p < 1000000; p += (p == 2 ? 1 : 2))
    while (v % p == 0) {
      fac[p]++;
      v /= p;
    }
  if (v > 1) {
    if (mpz_probab_prime_p(v.get_mpz_t(), 30) == 0)
      throw InvalidInput("exact spectrum: coefficient too large to factor; use numeric mode");
    fac[v]++;
  }
  std::vector<mpz_class> out{1};
  for (auto& [p, e] : fac) {
    size_t base = out.size();
    mpz_class pk = 1;
    for (int k = 1; k <= e; k++) {
      pk *= p;
      for (size_t i = 0; i < base; i++) {
        out.push_back(out[i] * pk);
        if (out.size() > 200000)
          throw InvalidInput("exact spectrum: too many divisor candidates; use numeric mode");
      }
    }
  }
  return out;
}

// all rational roots with multiplicity, ascending; throws unless the
// polynomial splits over the rationals
inline std::vector<Rat> rational_roots(std::vector<Rat> c) {
  std::vector<Rat> roots;
  while (c.size() > 1) {
    // strip zero roots, then integerize to a primitive polynomial
    if (c[0] == 0) {
      roots.emplace_back(0);
      c.erase(c.begin());
      continue;
    }
    mpz_class lcm = 1;
    for (auto& q : c) lcm = ::lcm(lcm, q.get_den());
    std::vector<mpz_class> b(c.size());
    for (size_t i = 0; i < c.size(); i++) {
      Rat scaled(c[i] * lcm);
      b[i] = scaled.get_num();
    }
    mpz_class g = 0;
    for (auto& v : b) g = gcd(g, v);
    for (auto& v : b) v /= g;

    Rat found;
    bool ok = false;
    for (auto& p : divisors_of(b.front())) {
      for (auto& q : divisors_of(b.back())) {
        for (int sgn : {1, -1}) {
          Rat r(sgn * p, q);
          r.canonicalize();
          Rat val = c.back();
          for (size_t i = c.size() - 1; i-- > 0;) val = val * r + c[i];
          if (val == 0) {
            found = r;
            ok = true;
            break;
          }
        }
        if (ok) break;
      }
      if (ok) break;
    }
    if (!ok) throw InvalidInput("matrix spectrum is not rational; use numeric mode");
    roots.push_back(found);
    // synthetic division by (t - found)
    std::vector<Rat> d(c.size() - 1);
    Rat carry = c.back();
    for (size_t i = c.size() - 1; i-- > 0;) {
      d[i] = carry;
      carry = c[i] + carry * found;
    }
    c = std::move(d);
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace detail

// Exact eigendecomposition of a hermitian matrix with rational spectrum.
// Eigenvalues come back ascending with multiplicity; the eigenvector columns
// (grouped to match) are exact rational bases of the eigenspaces, orthogonal
// across eigenvalues but not normalized.
template <class S>
struct ExactEigen {
  std::vector<Rat> evals;
  Mat<S> vecs;
};

template <class S>
ExactEigen<S> eigen_exact_hermitian(const Mat<S>& h) {
  static_assert(ScalarOps<S>::exact, "eigen_exact_hermitian is an exact-mode tool");
  int n = h.rows;
  if (!Mat<S>(h - h.conj_transpose()).is_zero())
    throw InvalidInput("exact spectrum: matrix is not hermitian");
  std::vector<Rat> real_coeffs(n + 1);
  auto cp = char_poly(h);
  for (int i = 0; i <= n; i++) real_coeffs[i] = rat_of(cp[i]);
  auto roots = detail::rational_roots(std::move(real_coeffs));

  ExactEigen<S> out;
  out.vecs = Mat<S>(n, 0);
  for (size_t i = 0; i < roots.size();) {
    size_t j = i;
    while (j < roots.size() && roots[j] == roots[i]) j++;
    Mat<S> shifted = h;
    S lam = ScalarOps<S>::from_rat(roots[i]);
    for (int k = 0; k < n; k++) shifted.at(k, k) -= lam;
    Mat<S> basis = nullspace(shifted);
    if (basis.cols != int(j - i))
      throw std::logic_error("eigenspace dimension does not match root multiplicity");
    out.vecs = Mat<S>::hcat(out.vecs, basis);
    for (size_t k = i; k < j; k++) out.evals.push_back(roots[i]);
    i = j;
  }
  return out;
}

}  // namespace bvdet
