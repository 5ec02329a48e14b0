#include <vector>

#include "bvdet/pfaffian.hpp"
#include "bvdet/rng.hpp"
#include "doctest.h"

using namespace bvdet;

namespace {

template <class S>
Mat<S> random_skew(Rng& rng, int n) {
  Mat<S> m(n, n);
  for (int i = 0; i < n; i++)
    for (int j = i + 1; j < n; j++) {
      S v;
      if constexpr (std::is_same_v<S, Rat>)
        v = rng.rational();
      else
        v = rng.gauss_rational(4, 3);
      m.at(i, j) = v;
      m.at(j, i) = -v;
    }
  return m;
}

Mat<Rat> random_invertible(Rng& rng, int n) {
  for (;;) {
    Mat<Rat> s(n, n);
    for (int i = 0; i < n; i++)
      for (int j = 0; j < n; j++) s.at(i, j) = rng.rational(3, 2);
    if (bareiss_det(s) != 0) return s;
  }
}

// recursive perfect-matching expansion, independent of the exponential path
template <class S>
S pf_matchings(const Mat<S>& m) {
  int n = m.rows;
  if (n % 2) return ScalarOps<S>::zero();
  if (n == 0) return ScalarOps<S>::one();
  S acc = ScalarOps<S>::zero();
  for (int j = 1; j < n; j++) {
    if (ScalarOps<S>::is_zero(m.at(0, j))) continue;
    Mat<S> minor(n - 2, n - 2);
    int ri = 0;
    for (int i = 1; i < n; i++) {
      if (i == j) continue;
      int rj = 0;
      for (int k = 1; k < n; k++) {
        if (k == j) continue;
        minor.at(ri, rj++) = m.at(i, k);
      }
      ri++;
    }
    S term = m.at(0, j) * pf_matchings(minor);
    acc += (j % 2) ? term : -term;
  }
  return acc;
}

// skew form with kernel of exact dimension k, as a congruence of the
// canonical symplectic-plus-zero block form
SkewForm<Rat> skew_with_kernel(Rng& rng, int n, int k) {
  Mat<Rat> j(n, n);
  for (int i = 0; i + 1 < n - k; i += 2) {
    j.at(i, i + 1) = Rat(1);
    j.at(i + 1, i) = Rat(-1);
  }
  Mat<Rat> s = random_invertible(rng, n);
  return SkewForm<Rat>(s.transpose() * j * s);
}

}  // namespace

TEST_CASE("pinned small values") {
  CHECK(pfaffian(SkewForm<Rat>(Mat<Rat>(0, 0))) == Rat(1));

  Mat<Rat> two(2, 2);
  two.at(0, 1) = rat_of(7, 3);
  two.at(1, 0) = rat_of(-7, 3);
  CHECK(pfaffian(SkewForm<Rat>(two)) == rat_of(7, 3));

  Rng rng(301);
  Mat<Rat> four = random_skew<Rat>(rng, 4);
  Rat expect = four.at(0, 1) * four.at(2, 3) - four.at(0, 2) * four.at(1, 3) +
               four.at(0, 3) * four.at(1, 2);
  CHECK(pfaffian(SkewForm<Rat>(four)) == expect);

  CHECK(pfaffian(SkewForm<Rat>(Mat<Rat>(3, 3))) == Rat(0));
  CHECK(pfaffian(skew_with_kernel(rng, 6, 2)) == Rat(0));

  Mat<Rat> notskew(2, 2);
  notskew.at(0, 1) = Rat(1);
  CHECK_THROWS_AS((void)SkewForm<Rat>{notskew}, InvalidInput);
}

TEST_CASE("exponential definition matches the matching expansion") {
  Rng rng(302);
  for (int n = 0; n <= 8; n++)
    for (int it = 0; it < 6; it++) {
      Mat<Rat> m = random_skew<Rat>(rng, n);
      CHECK(pfaffian(SkewForm<Rat>(m)) == pf_matchings(m));
    }
  for (int it = 0; it < 6; it++) {
    Mat<GaussRat> m = random_skew<GaussRat>(rng, 6);
    CHECK(pfaffian(SkewForm<GaussRat>(m)) == pf_matchings(m));
  }
}

TEST_CASE("square of the value is the determinant") {
  Rng rng(303);
  for (int n = 0; n <= 10; n += 2)
    for (int it = 0; it < 4; it++) {
      Mat<Rat> m = random_skew<Rat>(rng, n);
      Rat p = pfaffian(SkewForm<Rat>(m));
      CHECK(p * p == bareiss_det(m));
    }
}

TEST_CASE("multiplicative on direct sums") {
  Rng rng(304);
  for (int it = 0; it < 10; it++) {
    SkewForm<Rat> a(random_skew<Rat>(rng, 4)), b(random_skew<Rat>(rng, 2));
    CHECK(pfaffian(direct_sum(a, b)) == pfaffian(a) * pfaffian(b));
  }
}

TEST_CASE("congruence scales the value by the determinant") {
  Rng rng(305);
  for (int it = 0; it < 10; it++) {
    Mat<Rat> m = random_skew<Rat>(rng, 4);
    Mat<Rat> s = random_invertible(rng, 4);
    SkewForm<Rat> a(m), b(s.transpose() * m * s);
    CHECK(pfaffian(b) == bareiss_det(s) * pfaffian(a));
  }
}

TEST_CASE("kernel-coframe homomorphism") {
  Rng rng(306);

  SUBCASE("trivial kernel reduces to the plain value") {
    for (int it = 0; it < 5; it++) {
      SkewForm<Rat> a(random_skew<Rat>(rng, 4));
      if (pfaffian(a) == 0) continue;
      Splitting<Rat> s = make_splitting(a);
      Element<Rat> omega = Element<Rat>::scalar(GenSpec{0, 0}, Rat(1));
      CHECK(pfaffian_hom(a, s, omega) == pfaffian(a));
    }
  }

  SUBCASE("zero form with the full top form gives 1") {
    int n = 3;
    SkewForm<Rat> a(Mat<Rat>(n, n));
    Splitting<Rat> s = make_splitting(a);
    Monomial top;
    top.xmask = (uint64_t(1) << n) - 1;
    Element<Rat> omega = Element<Rat>::monomial(GenSpec{n, 0}, top, Rat(1));
    CHECK(pfaffian_hom(a, s, omega) == Rat(1));
  }

  SUBCASE("independent of the complement") {
    for (int k = 1; k <= 3; k++)
      for (int it = 0; it < 5; it++) {
        int n = 4 + k;  // keeps the rank n - k even
        SkewForm<Rat> a = skew_with_kernel(rng, n, k);
        Splitting<Rat> s1 = make_splitting(a);
        int r = s1.kernel_basis.cols;
        // mix kernel directions into the complement and change its basis
        Splitting<Rat> s2 = s1;
        Mat<Rat> mix(r, n - r), chg = random_invertible(rng, n - r);
        for (int i = 0; i < r; i++)
          for (int j = 0; j < n - r; j++) mix.at(i, j) = rng.rational(2, 2);
        s2.complement_basis = s2.complement_basis * chg + s1.kernel_basis * mix;
        Monomial top;
        top.xmask = (r == 0) ? 0 : ((uint64_t(1) << r) - 1);
        Element<Rat> omega = Element<Rat>::monomial(GenSpec{r, 0}, top, rat_of(5, 3));
        CHECK(pfaffian_hom(a, s1, omega) == pfaffian_hom(a, s2, omega));
      }
  }

  SUBCASE("never the zero map") {
    for (int k = 0; k <= 2; k++)
      for (int it = 0; it < 5; it++) {
        int n = 4 + 2 * k;
        SkewForm<Rat> a = skew_with_kernel(rng, n, 2 * k);
        Splitting<Rat> s = make_splitting(a);
        int r = s.kernel_basis.cols;
        Monomial top;
        top.xmask = (r == 0) ? 0 : ((uint64_t(1) << r) - 1);
        Element<Rat> omega = Element<Rat>::monomial(GenSpec{r, 0}, top, Rat(1));
        CHECK(pfaffian_hom(a, s, omega) != Rat(0));
      }
  }

  SUBCASE("rejects omega of mixed or wrong degree") {
    SkewForm<Rat> a = skew_with_kernel(rng, 4, 2);
    Splitting<Rat> s = make_splitting(a);
    Element<Rat> low = Element<Rat>::gen_x(GenSpec{2, 0}, 0);
    CHECK_THROWS_AS(pfaffian_hom(a, s, low), InvalidInput);
  }
}

TEST_CASE("rectangular pairing extension") {
  SUBCASE("one by one") {
    Mat<Rat> t(1, 1);
    t.at(0, 0) = rat_of(9, 4);
    CHECK(pfaffian(skew_extension(t)) == rat_of(9, 4));
  }
  SUBCASE("identity in rank two") {
    CHECK(pfaffian(skew_extension(Mat<Rat>::identity(2))) == Rat(-1));
  }
  SUBCASE("matches the signed determinant in general") {
    Rng rng(307);
    for (int n = 1; n <= 4; n++)
      for (int it = 0; it < 5; it++) {
        Mat<Rat> t(n, n);
        for (int i = 0; i < n; i++)
          for (int j = 0; j < n; j++) t.at(i, j) = rng.rational(4, 3);
        Rat sign = (n * (n - 1) / 2) % 2 ? Rat(-1) : Rat(1);
        CHECK(pfaffian(skew_extension(t)) == sign * bareiss_det(t));
      }
  }
  SUBCASE("singular and rectangular maps give zero") {
    Mat<Rat> t(2, 2);
    t.at(0, 0) = Rat(1), t.at(0, 1) = Rat(2);
    t.at(1, 0) = Rat(2), t.at(1, 1) = Rat(4);
    CHECK(pfaffian(skew_extension(t)) == Rat(0));
    Mat<Rat> rect(2, 4);
    for (int i = 0; i < 2; i++)
      for (int j = 0; j < 4; j++) rect.at(i, j) = rat_of(i + j + 1, 1);
    CHECK(pfaffian(skew_extension(rect)) == Rat(0));
  }
}
