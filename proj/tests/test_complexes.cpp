#include "bvdet/complexes.hpp"

#include "bvdet/pfaffian.hpp"
#include "bvdet/rng.hpp"
#include "doctest.h"

using namespace bvdet;

namespace {

Mat<Rat> random_invertible(Rng& rng, int n) {
  for (;;) {
    Mat<Rat> s(n, n);
    for (int i = 0; i < n; i++)
      for (int j = 0; j < n; j++) s.at(i, j) = rng.rational(2, 1);
    if (n == 0 || bareiss_det(s) != 0) return s;
  }
}

// Retraction of small + cones onto small, conjugated by a random change of
// basis in every degree of the big complex. Basis order in degree k:
// [small_k | cone tails starting at k | cone heads of cones from k-1].
struct ConeData {
  Retraction<Rat> r;
  std::map<int, Mat<Rat>> g;  // the conjugators
};

ConeData retraction_over(Rng& rng, const CochainComplex<Rat>& small, int lo, int hi,
                         int max_cones) {
  std::map<int, int> cones;
  for (int k = lo; k < hi; k++) cones[k] = int(rng.uniform(0, max_cones));
  auto cone_at = [&](int k) {
    auto it = cones.find(k);
    return it == cones.end() ? 0 : it->second;
  };

  Retraction<Rat> r;
  r.small = small;
  for (int k = lo; k <= hi; k++)
    r.big.set_dim(k, small.dim(k) + cone_at(k) + cone_at(k - 1));
  for (int k = lo; k <= hi; k++) {
    int vk = r.big.dim(k), vk1 = r.big.dim(k + 1);
    int wk = small.dim(k), wk1 = small.dim(k + 1);
    if (vk && vk1) {
      Mat<Rat> d(vk1, vk);
      Mat<Rat> dw = small.diff(k);
      for (int i = 0; i < wk1; i++)
        for (int j = 0; j < wk; j++) d.at(i, j) = dw.at(i, j);
      for (int i = 0; i < cone_at(k); i++)
        d.at(wk1 + cone_at(k + 1) + i, wk + i) = Rat(1);
      r.big.set_diff(k, d);
    }
    if (wk) {
      Mat<Rat> io(vk, wk), pr(wk, vk);
      for (int i = 0; i < wk; i++) io.at(i, i) = pr.at(i, i) = Rat(1);
      r.iota.set_block(k, io);
      r.pi.set_block(k, pr);
    }
    int vkm = r.big.dim(k - 1);
    if (vk && vkm && cone_at(k - 1)) {
      Mat<Rat> et(vkm, vk);
      for (int i = 0; i < cone_at(k - 1); i++)
        et.at(small.dim(k - 1) + i, wk + cone_at(k) + i) = Rat(-1);
      r.eta.set_block(k, et);
    }
  }

  ConeData out;
  out.g[lo - 1] = Mat<Rat>(0, 0);
  for (int k = lo; k <= hi; k++) out.g[k] = random_invertible(rng, r.big.dim(k));
  Retraction<Rat>& c = out.r;
  c.small = small;
  c.big.dims = r.big.dims;
  for (int k = lo; k <= hi; k++) {
    int vk = r.big.dim(k), vk1 = r.big.dim(k + 1), vkm = r.big.dim(k - 1);
    int wk = small.dim(k);
    Mat<Rat> gk = out.g[k];
    Mat<Rat> gkinv = vk ? inverse(gk) : gk;
    if (vk && vk1) {
      Mat<Rat> g1 = (k + 1 <= hi) ? out.g.at(k + 1) : Mat<Rat>::identity(vk1);
      c.big.set_diff(k, g1 * r.big.diff(k) * gkinv);
    }
    if (wk && vk) {
      c.iota.set_block(k, gk * r.iota.block(k, vk, wk));
      c.pi.set_block(k, r.pi.block(k, wk, vk) * gkinv);
    }
    if (vk && vkm) {
      Mat<Rat> gm = out.g.count(k - 1) ? out.g.at(k - 1) : Mat<Rat>::identity(vkm);
      c.eta.set_block(k, gm * r.eta.block(k, vkm, vk) * gkinv);
    }
  }
  return out;
}

CochainComplex<Rat> random_zero_diff(Rng& rng, int lo, int hi, int maxdim) {
  CochainComplex<Rat> c;
  for (int k = lo; k <= hi; k++) c.set_dim(k, int(rng.uniform(0, maxdim)));
  return c;
}

// a perturbation obtained by re-conjugating the same big complex
Perturbation<Rat> conjugation_delta(Rng& rng, const CochainComplex<Rat>& big) {
  std::map<int, Mat<Rat>> h;
  for (auto& [k, n] : big.dims) h[k] = random_invertible(rng, n);
  auto hat = [&](int k) {
    auto it = h.find(k);
    return it == h.end() ? Mat<Rat>::identity(big.dim(k)) : it->second;
  };
  Perturbation<Rat> p;
  for (int k = big.min_degree(); k < big.max_degree(); k++) {
    if (!big.dim(k) || !big.dim(k + 1)) continue;
    Mat<Rat> nd = hat(k + 1) * big.diff(k) * inverse(hat(k));
    p.delta.set_block(k, nd - big.diff(k));
  }
  return p;
}

}  // namespace

TEST_CASE("cohomology dimensions") {
  SUBCASE("zero differential returns the graded dimensions") {
    CochainComplex<Rat> c;
    c.set_dim(-1, 3);
    c.set_dim(0, 2);
    auto h = cohomology_dims(c);
    CHECK(h[-1] == 3);
    CHECK(h[0] == 2);
  }
  SUBCASE("the acyclic segment has no cohomology") {
    CochainComplex<Rat> c;
    c.set_dim(0, 1);
    c.set_dim(1, 1);
    c.set_diff(0, Mat<Rat>::identity(1));
    CHECK(cohomology_dims(c).empty());
  }
  SUBCASE("two-term complex of a skew form") {
    Rng rng(401);
    for (int r2 = 0; r2 <= 4; r2 += 2) {
      int n = 5;
      Mat<Rat> j(n, n);
      for (int i = 0; i + 1 < r2; i += 2) {
        j.at(i, i + 1) = Rat(1);
        j.at(i + 1, i) = Rat(-1);
      }
      Mat<Rat> s = random_invertible(rng, n);
      Mat<Rat> a = s.transpose() * j * s;
      CochainComplex<Rat> c;
      c.set_dim(0, n);
      c.set_dim(1, n);
      c.set_diff(0, a);
      auto h = cohomology_dims(c);
      CHECK(h[0] == n - r2);
      CHECK(h[1] == n - r2);
    }
  }
  SUBCASE("broken differential is rejected") {
    CochainComplex<Rat> c;
    c.set_dim(0, 1);
    c.set_dim(1, 1);
    c.set_dim(2, 1);
    c.set_diff(0, Mat<Rat>::identity(1));
    c.set_diff(1, Mat<Rat>::identity(1));
    CHECK_THROWS_AS(cohomology_dims(c), InvalidInput);
  }
}

TEST_CASE("retraction verification") {
  Rng rng(402);
  SUBCASE("identity retraction") {
    CochainComplex<Rat> v = retraction_over(rng, random_zero_diff(rng, 0, 2, 3), 0, 2, 2).r.big;
    Retraction<Rat> r;
    r.small = r.big = v;
    for (auto& [k, n] : v.dims) {
      r.iota.set_block(k, Mat<Rat>::identity(n));
      r.pi.set_block(k, Mat<Rat>::identity(n));
    }
    CHECK(verify_retraction(r).ok());
  }
  SUBCASE("random conjugated retractions pass and preserve cohomology") {
    for (int it = 0; it < 10; it++) {
      ConeData cd = retraction_over(rng, random_zero_diff(rng, -2, 1, 3), -2, 1, 3);
      CHECK(verify_retraction(cd.r).ok());
      CHECK(cohomology_dims(cd.r.small) == cohomology_dims(cd.r.big));
    }
  }
  SUBCASE("corrupting the homotopy is detected") {
    ConeData cd = retraction_over(rng, random_zero_diff(rng, 0, 2, 2), 0, 2, 2);
    for (;;) {
      if (!cd.r.eta.blocks.empty()) break;
      cd = retraction_over(rng, random_zero_diff(rng, 0, 2, 2), 0, 2, 2);
    }
    auto& [k, blk] = *cd.r.eta.blocks.begin();
    blk.at(0, 0) += Rat(1);
    AxiomReport rep = verify_retraction(cd.r);
    CHECK(!rep.ok());
    bool homotopy_failed = false;
    for (auto& c : rep.checks)
      if (c.name == "homotopy_identity" && !c.pass) homotopy_failed = true;
    CHECK(homotopy_failed);
  }
}

TEST_CASE("perturbation lemma") {
  Rng rng(403);
  SUBCASE("zero perturbation returns the input") {
    ConeData cd = retraction_over(rng, random_zero_diff(rng, 0, 2, 3), 0, 2, 2);
    Retraction<Rat> out = perturb(cd.r, Perturbation<Rat>{});
    CHECK(verify_retraction(out).ok());
    for (auto& [k, blk] : cd.r.iota.blocks)
      CHECK((out.iota.block(k, blk.rows, blk.cols) - blk).is_zero());
    for (auto& [k, blk] : cd.r.eta.blocks)
      CHECK((out.eta.block(k, blk.rows, blk.cols) - blk).is_zero());
    CHECK(out.small.same_shape(cd.r.small));
  }
  SUBCASE("conjugation perturbations produce valid retractions") {
    int done = 0;
    while (done < 8) {
      ConeData cd = retraction_over(rng, random_zero_diff(rng, -1, 1, 2), -1, 1, 2);
      Perturbation<Rat> p = conjugation_delta(rng, cd.r.big);
      Retraction<Rat> out;
      try {
        out = perturb(cd.r, p);
      } catch (const InvalidInput&) {
        continue;  // (1 - delta eta) happened to be singular; resample
      }
      CHECK(verify_retraction(out).ok());
      CHECK(cohomology_dims(out.small) == cohomology_dims(out.big));
      done++;
    }
  }
  SUBCASE("stacked perturbations agree with the perturbation by the sum") {
    int done = 0;
    while (done < 6) {
      ConeData cd = retraction_over(rng, random_zero_diff(rng, 0, 2, 2), 0, 2, 2);
      Perturbation<Rat> p1 = conjugation_delta(rng, cd.r.big);
      CochainComplex<Rat> mid = cd.r.big;
      for (int k = mid.min_degree(); k < mid.max_degree(); k++)
        if (mid.dim(k) && mid.dim(k + 1))
          mid.set_diff(k, mid.diff(k) + p1.delta.block(k, mid.dim(k + 1), mid.dim(k)));
      Perturbation<Rat> p2 = conjugation_delta(rng, mid);
      Perturbation<Rat> sum;
      for (int k = mid.min_degree(); k < mid.max_degree(); k++)
        if (mid.dim(k) && mid.dim(k + 1))
          sum.delta.set_block(k, p1.delta.block(k, mid.dim(k + 1), mid.dim(k)) +
                                     p2.delta.block(k, mid.dim(k + 1), mid.dim(k)));
      Retraction<Rat> a, b;
      try {
        a = perturb(perturb(cd.r, p1), p2);
        b = perturb(cd.r, sum);
      } catch (const InvalidInput&) {
        continue;
      }
      for (int k = cd.r.big.min_degree(); k <= cd.r.big.max_degree(); k++) {
        int wk = cd.r.small.dim(k), vk = cd.r.big.dim(k), vkm = cd.r.big.dim(k - 1);
        CHECK((a.iota.block(k, vk, wk) - b.iota.block(k, vk, wk)).is_zero());
        CHECK((a.pi.block(k, wk, vk) - b.pi.block(k, wk, vk)).is_zero());
        CHECK((a.eta.block(k, vkm, vk) - b.eta.block(k, vkm, vk)).is_zero());
        CHECK((a.small.diff(k) - b.small.diff(k)).is_zero());
      }
      done++;
    }
  }
  SUBCASE("series and dense inverses agree on a nilpotent instance") {
    // two cones in adjacent degrees, delta strictly triangular
    Retraction<Rat> r;
    r.big.set_dim(0, 2);
    r.big.set_dim(1, 2);
    r.big.set_diff(0, Mat<Rat>::identity(2));
    GradedMap<Rat> eta(-1);
    Mat<Rat> e(2, 2);
    e.at(0, 0) = e.at(1, 1) = Rat(-1);
    eta.set_block(1, e);
    r.eta = eta;
    REQUIRE(verify_retraction(r).ok());
    Perturbation<Rat> p;
    Mat<Rat> dl(2, 2);
    dl.at(1, 0) = rat_of(5, 7);
    p.delta.set_block(0, dl);
    Retraction<Rat> a = perturb(r, p, InversePolicy::Series);
    Retraction<Rat> b = perturb(r, p, InversePolicy::Dense);
    CHECK(verify_retraction(a).ok());
    for (int k = 0; k <= 1; k++)
      CHECK((a.eta.block(k, r.big.dim(k - 1), r.big.dim(k)) -
             b.eta.block(k, r.big.dim(k - 1), r.big.dim(k)))
                .is_zero());
  }
}

TEST_CASE("composition of retractions") {
  Rng rng(404);
  SUBCASE("composing with the identity returns the original") {
    ConeData cd = retraction_over(rng, random_zero_diff(rng, 0, 2, 3), 0, 2, 2);
    Retraction<Rat> idr;
    idr.small = idr.big = cd.r.small;
    for (auto& [k, n] : cd.r.small.dims) {
      idr.iota.set_block(k, Mat<Rat>::identity(n));
      idr.pi.set_block(k, Mat<Rat>::identity(n));
    }
    Retraction<Rat> out = compose_retractions(idr, cd.r);
    for (int k = 0; k <= 2; k++) {
      int wk = out.small.dim(k), vk = out.big.dim(k), vkm = out.big.dim(k - 1);
      CHECK((out.iota.block(k, vk, wk) - cd.r.iota.block(k, vk, wk)).is_zero());
      CHECK((out.pi.block(k, wk, vk) - cd.r.pi.block(k, wk, vk)).is_zero());
      CHECK((out.eta.block(k, vkm, vk) - cd.r.eta.block(k, vkm, vk)).is_zero());
    }
  }
  SUBCASE("stacked random retractions compose to a valid retraction") {
    for (int it = 0; it < 8; it++) {
      CochainComplex<Rat> w1 = random_zero_diff(rng, 0, 2, 2);
      ConeData lower = retraction_over(rng, w1, 0, 2, 2);
      ConeData upper = retraction_over(rng, lower.r.big, 0, 2, 2);
      Retraction<Rat> tall = compose_retractions(lower.r, upper.r);
      CHECK(verify_retraction(tall).ok());
      CHECK(cohomology_dims(tall.small) == cohomology_dims(tall.big));
    }
  }
  SUBCASE("middle mismatch is rejected") {
    ConeData a = retraction_over(rng, random_zero_diff(rng, 0, 1, 2), 0, 1, 1);
    ConeData b = retraction_over(rng, random_zero_diff(rng, 0, 1, 3), 0, 1, 1);
    if (!a.r.big.same_shape(b.r.small))
      CHECK_THROWS_AS(compose_retractions(a.r, b.r), InvalidInput);
  }
}

TEST_CASE("projection compatibility of stacked perturbations") {
  Rng rng(405);
  SUBCASE("zero perturbations satisfy everything") {
    CochainComplex<Rat> w1 = random_zero_diff(rng, 0, 2, 2);
    ConeData lower = retraction_over(rng, w1, 0, 2, 2);
    ConeData upper = retraction_over(rng, lower.r.big, 0, 2, 2);
    CompatibilityReport rep = check_projection_compatibility(
        lower.r, upper.r, Perturbation<Rat>{}, Perturbation<Rat>{});
    CHECK(rep.preconditions_ok());
    CHECK(rep.ok());
  }
  SUBCASE("generic perturbation violates the preconditions and is flagged") {
    int done = 0;
    while (done < 4) {
      CochainComplex<Rat> w1 = random_zero_diff(rng, 0, 2, 2);
      ConeData lower = retraction_over(rng, w1, 0, 2, 2);
      ConeData upper = retraction_over(rng, lower.r.big, 0, 2, 2);
      Perturbation<Rat> d3 = conjugation_delta(rng, upper.r.big);
      // project it down to get a d2 consistent with A.3, then test A.1/A.2
      Perturbation<Rat> d2;
      for (int k = 0; k < 2; k++) {
        int v2 = upper.r.small.dim(k), v2p = upper.r.small.dim(k + 1);
        int v3 = upper.r.big.dim(k), v3p = upper.r.big.dim(k + 1);
        if (!v2 || !v2p) continue;
        d2.delta.set_block(k, upper.r.pi.block(k + 1, v2p, v3p) *
                                  d3.delta.block(k, v3p, v3) *
                                  upper.r.iota.block(k, v3, v2));
      }
      CompatibilityReport rep;
      try {
        rep = check_projection_compatibility(lower.r, upper.r, d2, d3);
      } catch (const InvalidInput&) {
        continue;  // perturbation too large for one of the towers
      }
      CHECK(rep.a3.pass);
      if (!rep.a1.pass || !rep.a2.pass) {
        CHECK(!rep.preconditions_ok());
        done++;
      }
    }
  }
}
