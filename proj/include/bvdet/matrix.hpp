#pragma once

#include <algorithm>
#include <cassert>
#include <vector>

#include "bvdet/scalar.hpp"

namespace bvdet {

// Dense matrix over an exact field (Rat, GaussRat) or complex<double>.
// Row-major. Everything here is desk scale, clarity over blocking.
template <class S>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<S> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(size_t(r) * c, ScalarOps<S>::zero()) {}

  S& at(int i, int j) { return a[size_t(i) * cols + j]; }
  const S& at(int i, int j) const { return a[size_t(i) * cols + j]; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; i++) m.at(i, i) = ScalarOps<S>::one();
    return m;
  }
  static Mat zero(int r, int c) { return Mat(r, c); }

  bool is_zero(double tol = 0) const {
    for (const S& v : a)
      if (!ScalarOps<S>::is_zero(v, tol)) return false;
    return true;
  }
  double max_mag() const {
    double m = 0;
    for (const S& v : a) m = std::max(m, ScalarOps<S>::mag(v));
    return m;
  }

  Mat transpose() const {
    Mat t(cols, rows);
    for (int i = 0; i < rows; i++)
      for (int j = 0; j < cols; j++) t.at(j, i) = at(i, j);
    return t;
  }
  Mat conj_transpose() const {
    Mat t(cols, rows);
    for (int i = 0; i < rows; i++)
      for (int j = 0; j < cols; j++) t.at(j, i) = ScalarOps<S>::conj(at(i, j));
    return t;
  }
  Mat conj() const {
    Mat t(rows, cols);
    for (int i = 0; i < rows; i++)
      for (int j = 0; j < cols; j++) t.at(i, j) = ScalarOps<S>::conj(at(i, j));
    return t;
  }

  friend Mat operator*(const Mat& x, const Mat& y) {
    if (x.cols != y.rows) throw InvalidInput("matrix product shape mismatch");
    Mat r(x.rows, y.cols);
    for (int i = 0; i < x.rows; i++)
      for (int k = 0; k < x.cols; k++) {
        const S& v = x.at(i, k);
        if (ScalarOps<S>::is_zero(v)) continue;
        for (int j = 0; j < y.cols; j++) r.at(i, j) += v * y.at(k, j);
      }
    return r;
  }
  friend Mat operator+(const Mat& x, const Mat& y) {
    if (x.rows != y.rows || x.cols != y.cols) throw InvalidInput("matrix sum shape mismatch");
    Mat r = x;
    for (size_t i = 0; i < r.a.size(); i++) r.a[i] += y.a[i];
    return r;
  }
  friend Mat operator-(const Mat& x, const Mat& y) {
    if (x.rows != y.rows || x.cols != y.cols) throw InvalidInput("matrix diff shape mismatch");
    Mat r = x;
    for (size_t i = 0; i < r.a.size(); i++) r.a[i] -= y.a[i];
    return r;
  }
  friend Mat operator-(const Mat& x) {
    Mat r = x;
    for (S& v : r.a) v = -v;
    return r;
  }
  friend Mat operator*(const S& c, const Mat& x) {
    Mat r = x;
    for (S& v : r.a) v = c * v;
    return r;
  }

  Mat col(int j) const {
    Mat r(rows, 1);
    for (int i = 0; i < rows; i++) r.at(i, 0) = at(i, j);
    return r;
  }
  Mat cols_range(int j0, int j1) const {
    Mat r(rows, j1 - j0);
    for (int i = 0; i < rows; i++)
      for (int j = j0; j < j1; j++) r.at(i, j - j0) = at(i, j);
    return r;
  }
  static Mat hcat(const Mat& x, const Mat& y) {
    if (x.rows != y.rows) throw InvalidInput("hcat shape mismatch");
    Mat r(x.rows, x.cols + y.cols);
    for (int i = 0; i < x.rows; i++) {
      for (int j = 0; j < x.cols; j++) r.at(i, j) = x.at(i, j);
      for (int j = 0; j < y.cols; j++) r.at(i, x.cols + j) = y.at(i, j);
    }
    return r;
  }
};

namespace detail {
template <class S>
double pivot_threshold(const Mat<S>& m, double eps) {
  if constexpr (ScalarOps<S>::exact) {
    (void)m, (void)eps;
    return 0;
  } else {
    double mm = m.max_mag();
    return eps * (mm > 0 ? mm : 1.0);
  }
}
}  // namespace detail

// In-place reduced row echelon form. Returns pivot column list.
// eps is only meaningful for inexact scalars (relative pivot cut).
template <class S>
std::vector<int> rref(Mat<S>& m, double eps = 1e-12) {
  double thr = detail::pivot_threshold(m, eps);
  std::vector<int> pivots;
  int r = 0;
  for (int c = 0; c < m.cols && r < m.rows; c++) {
    int best = -1;
    for (int i = r; i < m.rows; i++) {
      if (ScalarOps<S>::is_zero(m.at(i, c), thr)) continue;
      if (best < 0 ||
          ScalarOps<S>::pivot_weight(m.at(i, c)) > ScalarOps<S>::pivot_weight(m.at(best, c)))
        best = i;
    }
    if (best < 0) continue;
    if (best != r)
      for (int j = 0; j < m.cols; j++) std::swap(m.at(r, j), m.at(best, j));
    S inv = ScalarOps<S>::one() / m.at(r, c);
    for (int j = c; j < m.cols; j++) m.at(r, j) = inv * m.at(r, j);
    for (int i = 0; i < m.rows; i++) {
      if (i == r) continue;
      S f = m.at(i, c);
      if (ScalarOps<S>::is_zero(f)) continue;
      for (int j = c; j < m.cols; j++) m.at(i, j) -= f * m.at(r, j);
    }
    pivots.push_back(c);
    r++;
  }
  return pivots;
}

template <class S>
int rank(Mat<S> m, double eps = 1e-12) {
  return int(rref(m, eps).size());
}

// Columns form a basis of the kernel.
template <class S>
Mat<S> nullspace(Mat<S> m, double eps = 1e-12) {
  int n = m.cols;
  std::vector<int> piv = rref(m, eps);
  std::vector<char> is_piv(n, 0);
  for (int c : piv) is_piv[c] = 1;
  Mat<S> ker(n, n - int(piv.size()));
  int k = 0;
  for (int c = 0; c < n; c++) {
    if (is_piv[c]) continue;
    ker.at(c, k) = ScalarOps<S>::one();
    for (size_t r = 0; r < piv.size(); r++) ker.at(piv[r], k) = -m.at(int(r), c);
    k++;
  }
  return ker;
}

// Solve A X = B for consistent systems (throws if inconsistent / rank deficient
// in a way that blocks a solution). Returns one solution with free vars at 0.
template <class S>
Mat<S> solve(const Mat<S>& A, const Mat<S>& B, double eps = 1e-12) {
  if (A.rows != B.rows) throw InvalidInput("solve shape mismatch");
  Mat<S> aug = Mat<S>::hcat(A, B);
  double thr = detail::pivot_threshold(aug, eps);
  std::vector<int> piv = rref(aug, eps);
  for (int c : piv)
    if (c >= A.cols) throw InvalidInput("inconsistent linear system");
  Mat<S> X(A.cols, B.cols);
  for (size_t r = 0; r < piv.size(); r++)
    for (int j = 0; j < B.cols; j++) X.at(piv[r], j) = aug.at(int(r), A.cols + j);
  // verify consistency of dropped rows
  for (int i = int(piv.size()); i < aug.rows; i++)
    for (int j = 0; j < B.cols; j++)
      if (!ScalarOps<S>::is_zero(aug.at(i, A.cols + j), thr))
        throw InvalidInput("inconsistent linear system");
  return X;
}

template <class S>
Mat<S> inverse(const Mat<S>& m, double eps = 1e-12) {
  if (m.rows != m.cols) throw InvalidInput("inverse of non-square matrix");
  Mat<S> aug = Mat<S>::hcat(m, Mat<S>::identity(m.rows));
  std::vector<int> piv = rref(aug, eps);
  if (int(piv.size()) != m.rows || (piv.size() && piv.back() >= m.rows))
    throw InvalidInput("singular matrix");
  return aug.cols_range(m.cols, 2 * m.cols);
}

// Fraction-free Bareiss determinant. For Rat the computation runs over the
// integers after clearing denominators, which is the point of the algorithm.
inline Rat bareiss_det(const Mat<Rat>& m) {
  if (m.rows != m.cols) throw InvalidInput("det of non-square matrix");
  int n = m.rows;
  if (n == 0) return Rat(1);
  mpz_class den(1);
  for (const Rat& v : m.a) {
    mpz_class d = v.get_den();
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), den.get_mpz_t(), d.get_mpz_t());
    den = den / g * d;
  }
  std::vector<mpz_class> w(size_t(n) * n);
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++) {
      Rat v = m.at(i, j) * Rat(den);
      v.canonicalize();
      assert(v.get_den() == 1);
      w[size_t(i) * n + j] = v.get_num();
    }
  auto at = [&](int i, int j) -> mpz_class& { return w[size_t(i) * n + j]; };
  int sign = 1;
  mpz_class prev(1);
  for (int k = 0; k < n - 1; k++) {
    if (at(k, k) == 0) {
      int p = -1;
      for (int i = k + 1; i < n; i++)
        if (at(i, k) != 0) {
          p = i;
          break;
        }
      if (p < 0) return Rat(0);
      for (int j = 0; j < n; j++) std::swap(at(k, j), at(p, j));
      sign = -sign;
    }
    for (int i = k + 1; i < n; i++)
      for (int j = k + 1; j < n; j++) {
        mpz_class t = at(i, j) * at(k, k) - at(i, k) * at(k, j);
        mpz_divexact(at(i, j).get_mpz_t(), t.get_mpz_t(), prev.get_mpz_t());
      }
    prev = at(k, k);
  }
  Rat det(at(n - 1, n - 1) * sign);
  mpz_class scale;
  mpz_pow_ui(scale.get_mpz_t(), den.get_mpz_t(), n);
  det /= Rat(scale);
  det.canonicalize();
  return det;
}

// Generic determinant: Bareiss-style fraction-free elimination over any
// exact field, partial-pivot elimination for floats.
template <class S>
S det(Mat<S> m, double eps = 1e-12) {
  if (m.rows != m.cols) throw InvalidInput("det of non-square matrix");
  int n = m.rows;
  if (n == 0) return ScalarOps<S>::one();
  double thr = detail::pivot_threshold(m, eps);
  S d = ScalarOps<S>::one();
  for (int k = 0; k < n; k++) {
    int best = -1;
    for (int i = k; i < n; i++) {
      if (ScalarOps<S>::is_zero(m.at(i, k), thr)) continue;
      if (best < 0 ||
          ScalarOps<S>::pivot_weight(m.at(i, k)) > ScalarOps<S>::pivot_weight(m.at(best, k)))
        best = i;
    }
    if (best < 0) return ScalarOps<S>::zero();
    if (best != k) {
      for (int j = 0; j < n; j++) std::swap(m.at(k, j), m.at(best, j));
      d = -d;
    }
    d = d * m.at(k, k);
    S inv = ScalarOps<S>::one() / m.at(k, k);
    for (int i = k + 1; i < n; i++) {
      S f = m.at(i, k) * inv;
      if (ScalarOps<S>::is_zero(f)) continue;
      for (int j = k; j < n; j++) m.at(i, j) -= f * m.at(k, j);
    }
  }
  return d;
}

// Moore-Penrose pseudo-inverse over an exact field via the full-rank
// factorization A = B C read off the reduced row echelon form.
template <class S>
Mat<S> pinv_exact(const Mat<S>& A) {
  static_assert(ScalarOps<S>::exact);
  Mat<S> R = A;
  std::vector<int> piv = rref(R);
  int r = int(piv.size());
  if (r == 0) return Mat<S>::zero(A.cols, A.rows);
  Mat<S> B(A.rows, r), C(r, A.cols);
  for (int k = 0; k < r; k++)
    for (int i = 0; i < A.rows; i++) B.at(i, k) = A.at(i, piv[k]);
  for (int k = 0; k < r; k++)
    for (int j = 0; j < A.cols; j++) C.at(k, j) = R.at(k, j);
  Mat<S> Bs = B.conj_transpose(), Cs = C.conj_transpose();
  return Cs * inverse(Mat<S>(C * Cs)) * inverse(Mat<S>(Bs * B)) * Bs;
}

}  // namespace bvdet
