#pragma once

#include <vector>

#include "bvdet/element.hpp"
#include "bvdet/matrix.hpp"

namespace bvdet {

// Skew form on an n-dimensional space, doubling as the quadratic element
// sum_{i<j} A_ij x_i x_j and as the map W -> W* it induces.
template <class S>
struct SkewForm {
  Mat<S> a;

  SkewForm() = default;
  explicit SkewForm(Mat<S> m, double tol = 0) : a(std::move(m)) {
    if (a.rows != a.cols) throw InvalidInput("skew form must be square");
    double thr = tol * std::max(1.0, a.max_mag());
    for (int i = 0; i < a.rows; i++)
      for (int j = 0; j <= i; j++) {
        S sum = a.at(i, j) + a.at(j, i);
        if (!ScalarOps<S>::is_zero(sum, thr)) throw InvalidInput("matrix is not skew-symmetric");
      }
  }

  int dim() const { return a.rows; }

  GenSpec gens() const { return GenSpec{a.rows, 0}; }

  Element<S> as_element() const { return as_element(gens()); }

  // the same quadratic element placed in a larger generator layout
  Element<S> as_element(GenSpec sp) const {
    if (sp.n < a.rows) throw InvalidInput("generator layout too small for the form");
    Element<S> f(sp);
    for (int i = 0; i < a.rows; i++)
      for (int j = i + 1; j < a.cols; j++) {
        if (ScalarOps<S>::is_zero(a.at(i, j))) continue;
        Monomial mo;
        mo.xmask = (uint64_t(1) << i) | (uint64_t(1) << j);
        f.add_term(mo, a.at(i, j));
      }
    return f;
  }
};

template <class S>
SkewForm<S> direct_sum(const SkewForm<S>& A, const SkewForm<S>& B) {
  int n = A.dim(), m = B.dim();
  Mat<S> s(n + m, n + m);
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++) s.at(i, j) = A.a.at(i, j);
  for (int i = 0; i < m; i++)
    for (int j = 0; j < m; j++) s.at(n + i, n + j) = B.a.at(i, j);
  return SkewForm<S>(std::move(s));
}

// The value of the top exterior power of e^A in the canonical frame
// x_1...x_n. The exponential is the implementation, not an optimization
// target; the 0-dimensional case is 1 by convention.
template <class S>
S pfaffian(const SkewForm<S>& A) {
  return exp_nilpotent(A.as_element()).top_x_coeff();
}

// Decomposition W = ker A + K with explicit bases for both summands.
template <class S>
struct Splitting {
  Mat<S> kernel_basis;      // n x r, columns span ker A
  Mat<S> complement_basis;  // n x (n-r)

  void validate(const SkewForm<S>& A, double eps = 1e-12) const {
    int n = A.dim(), r = kernel_basis.cols;
    if (kernel_basis.rows != n || complement_basis.rows != n ||
        complement_basis.cols != n - r)
      throw InvalidInput("splitting dimensions do not match the form");
    double thr = detail::pivot_threshold(A.a, eps) * (kernel_basis.max_mag() + 1);
    Mat<S> im = A.a * kernel_basis;
    if (!im.is_zero(thr)) throw InvalidInput("kernel basis is not annihilated by the form");
    Mat<S> full = Mat<S>::hcat(kernel_basis, complement_basis);
    if (rank(full, eps) != n) throw InvalidInput("splitting bases do not span");
    if (rank(A.a, eps) != n - r)
      throw InvalidInput("kernel basis does not exhaust the kernel");
    Mat<S> restr = complement_basis.transpose() * A.a * complement_basis;
    if (rank(restr, eps) != n - r)
      throw InvalidInput("form is degenerate on the complement");
  }
};

// Default splitting: exact kernel, complement filled greedily with standard
// basis vectors.
template <class S>
Splitting<S> make_splitting(const SkewForm<S>& A, double eps = 1e-12) {
  int n = A.dim();
  Splitting<S> s;
  s.kernel_basis = nullspace(A.a, eps);
  int r = s.kernel_basis.cols;
  s.complement_basis = Mat<S>(n, n - r);
  Mat<S> acc = s.kernel_basis;
  int got = 0;
  for (int j = 0; j < n && got < n - r; j++) {
    Mat<S> e(n, 1);
    e.at(j, 0) = ScalarOps<S>::one();
    Mat<S> trial = Mat<S>::hcat(acc, e);
    if (rank(trial, eps) == acc.cols + 1) {
      for (int i = 0; i < n; i++) s.complement_basis.at(i, got) = e.at(i, 0);
      acc = trial;
      got++;
    }
  }
  if (got != n - r) throw InvalidInput("failed to complete kernel basis");
  return s;
}

// Include omega (a top form on the kernel, written in the splitting's kernel
// coframe over generators x_1..x_r) into the full exterior algebra, multiply
// by e^A, and read off the canonical top coefficient.
template <class S>
S pfaffian_hom(const SkewForm<S>& A, const Splitting<S>& s, const Element<S>& omega) {
  int n = A.dim(), r = s.kernel_basis.cols;
  s.validate(A);
  if (!(omega.spec == GenSpec{r, 0}))
    throw InvalidInput("omega must live on the kernel coframe generators");
  uint64_t top = (r == 0) ? 0 : ((uint64_t(1) << r) - 1);
  S c = ScalarOps<S>::zero();
  for (auto& [mo, coef] : omega.terms) {
    if (mo.xmask != top || !mo.xi.empty())
      throw InvalidInput("omega must be a pure top form on the kernel");
    c = coef;
  }
  GenSpec sp = A.gens();
  // coframe of the splitting basis: rows of B^-1; the first r rows restrict
  // to the dual basis of the kernel and vanish on the complement
  Mat<S> B = Mat<S>::hcat(s.kernel_basis, s.complement_basis);
  Mat<S> Binv = inverse(B);
  Element<S> incl = Element<S>::scalar(sp, c);
  for (int k = 0; k < r; k++) {
    Element<S> lin(sp);
    for (int j = 0; j < n; j++) {
      if (ScalarOps<S>::is_zero(Binv.at(k, j))) continue;
      lin += Binv.at(k, j) * Element<S>::gen_x(sp, j);
    }
    incl = incl * lin;
  }
  return (incl * exp_nilpotent(A.as_element())).top_x_coeff();
}

// Skew form on W0 + W1* induced by a rectangular map T: W0 -> W1, pairing
// basis vectors of W0 against the dual basis of W1. With the generators
// ordered (W0 then W1*) the top coefficient of the exponential recovers
// (-1)^(n(n-1)/2) det T in the square case.
template <class S>
SkewForm<S> skew_extension(const Mat<S>& T) {
  int p = T.cols, q = T.rows;  // T maps a p-dim space to a q-dim space
  Mat<S> a(p + q, p + q);
  for (int i = 0; i < p; i++)
    for (int j = 0; j < q; j++) {
      a.at(i, p + j) = T.at(j, i);
      a.at(p + j, i) = -T.at(j, i);
    }
  return SkewForm<S>(std::move(a));
}

}  // namespace bvdet
