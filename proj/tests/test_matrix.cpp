#include <algorithm>
#include <numeric>
#include <vector>

#include "bvdet/matrix.hpp"
#include "bvdet/rng.hpp"
#include "doctest.h"

using namespace bvdet;

namespace {

template <class S>
Mat<S> random_mat(Rng& rng, int r, int c) {
  Mat<S> m(r, c);
  for (int i = 0; i < r; i++)
    for (int j = 0; j < c; j++) {
      if constexpr (std::is_same_v<S, Rat>)
        m.at(i, j) = rng.rational();
      else if constexpr (std::is_same_v<S, GaussRat>)
        m.at(i, j) = rng.gauss_rational(4, 3);
      else
        m.at(i, j) = Cplx(rng.real(-1, 1), rng.real(-1, 1));
    }
  return m;
}

// determinant by permutation expansion, for small cross-checks
template <class S>
S perm_det(const Mat<S>& m) {
  int n = m.rows;
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  S acc = ScalarOps<S>::zero();
  do {
    int inv = 0;
    for (int i = 0; i < n; i++)
      for (int j = i + 1; j < n; j++)
        if (p[i] > p[j]) inv++;
    S term = ScalarOps<S>::one();
    for (int i = 0; i < n; i++) term = term * m.at(i, p[i]);
    acc += (inv & 1) ? -term : term;
  } while (std::next_permutation(p.begin(), p.end()));
  return acc;
}

}  // namespace

TEST_CASE("rational determinant: fraction-free vs permutation expansion") {
  Rng rng(201);
  for (int n = 0; n <= 5; n++)
    for (int it = 0; it < 8; it++) {
      Mat<Rat> m = random_mat<Rat>(rng, n, n);
      CHECK(bareiss_det(m) == perm_det(m));
      CHECK(det(m) == perm_det(m));
    }
}

TEST_CASE("gaussian-rational determinant") {
  Rng rng(202);
  for (int it = 0; it < 10; it++) {
    Mat<GaussRat> m = random_mat<GaussRat>(rng, 4, 4);
    CHECK(det(m) == perm_det(m));
  }
}

TEST_CASE("inverse and solve over the rationals") {
  Rng rng(203);
  for (int it = 0; it < 15; it++) {
    Mat<Rat> m = random_mat<Rat>(rng, 5, 5);
    if (bareiss_det(m) == 0) continue;
    Mat<Rat> inv = inverse(m);
    CHECK((m * inv - Mat<Rat>::identity(5)).is_zero());
    Mat<Rat> b = random_mat<Rat>(rng, 5, 2);
    Mat<Rat> x = solve(m, b);
    CHECK((m * x - b).is_zero());
  }
  Mat<Rat> sing(2, 2);
  sing.at(0, 0) = Rat(1), sing.at(0, 1) = Rat(2);
  sing.at(1, 0) = Rat(2), sing.at(1, 1) = Rat(4);
  CHECK_THROWS_AS(inverse(sing), InvalidInput);
}

TEST_CASE("rank and nullspace") {
  Rng rng(204);
  for (int it = 0; it < 15; it++) {
    // build a matrix of known rank r as a product of full-rank factors
    int r = int(rng.uniform(0, 4));
    Mat<Rat> b = random_mat<Rat>(rng, 5, r), c = random_mat<Rat>(rng, r, 6);
    Mat<Rat> m = b * c;
    int rk = rank(m);
    CHECK(rk <= r);
    if (rank(b) == r && rank(c) == r) CHECK(rk == r);
    Mat<Rat> ker = nullspace(m);
    CHECK(ker.cols == 6 - rk);
    CHECK((m * ker).is_zero());
    CHECK(rank(ker) == ker.cols);
  }
}

TEST_CASE("exact pseudo-inverse satisfies all four Penrose identities") {
  Rng rng(205);
  for (int it = 0; it < 12; it++) {
    int r = int(rng.uniform(0, 3));
    Mat<GaussRat> b = random_mat<GaussRat>(rng, 4, r), c = random_mat<GaussRat>(rng, r, 5);
    Mat<GaussRat> A = b * c;
    Mat<GaussRat> P = pinv_exact(A);
    CHECK((A * P * A - A).is_zero());
    CHECK((P * A * P - P).is_zero());
    Mat<GaussRat> AP = A * P, PA = P * A;
    CHECK((AP.conj_transpose() - AP).is_zero());
    CHECK((PA.conj_transpose() - PA).is_zero());
  }
  // pseudo-inverse of an invertible matrix is its inverse
  Mat<Rat> m = random_mat<Rat>(rng, 4, 4);
  if (bareiss_det(m) != 0) CHECK((pinv_exact(m) - inverse(m)).is_zero());
}

TEST_CASE("numeric path: inverse residual and rank thresholding") {
  Rng rng(206);
  for (int it = 0; it < 10; it++) {
    Mat<Cplx> m = random_mat<Cplx>(rng, 6, 6);
    Mat<Cplx> inv = inverse(m);
    CHECK((m * inv - Mat<Cplx>::identity(6)).max_mag() < 1e-10);
  }
  // numerically rank-deficient: third column is a tiny perturbation of a sum
  Mat<Cplx> m = random_mat<Cplx>(rng, 4, 3);
  Mat<Cplx> bad(4, 4);
  for (int i = 0; i < 4; i++) {
    for (int j = 0; j < 3; j++) bad.at(i, j) = m.at(i, j);
    bad.at(i, 3) = m.at(i, 0) + m.at(i, 1) + Cplx(1e-15, 0);
  }
  CHECK(rank(bad, 1e-9) == 3);
}

TEST_CASE("block helpers") {
  Mat<Rat> a(2, 2), b(2, 1);
  a.at(0, 0) = Rat(1), a.at(1, 1) = Rat(2);
  b.at(0, 0) = Rat(3);
  Mat<Rat> h = Mat<Rat>::hcat(a, b);
  CHECK(h.cols == 3);
  CHECK(h.at(0, 2) == Rat(3));
  CHECK(h.cols_range(2, 3).at(0, 0) == Rat(3));
  Mat<GaussRat> g(1, 2);
  g.at(0, 1) = GaussRat{Rat(1), Rat(2)};
  Mat<GaussRat> ct = g.conj_transpose();
  CHECK(ct.at(1, 0) == (GaussRat{Rat(1), Rat(-2)}));
}
