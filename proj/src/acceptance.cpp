#include "bvdet/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "bvdet/bv.hpp"
#include "bvdet/rng.hpp"

namespace bvdet {
namespace {

using Clock = std::chrono::steady_clock;

// ---- exact instance generators ----------------------------------------------

Mat<Rat> random_skew(Rng& rng, int n) {
  Mat<Rat> a(n, n);
  for (int i = 0; i < n; i++)
    for (int j = i + 1; j < n; j++) {
      a.at(i, j) = rng.rational();
      a.at(j, i) = -a.at(i, j);
    }
  return a;
}

// skew n x n of rank n - k, a congruence of the padded block form
Mat<Rat> skew_with_kernel(Rng& rng, int n, int k) {
  Mat<Rat> j(n, n);
  for (int i = 0; 2 * i + 1 < n - k; i++) {
    j.at(2 * i, 2 * i + 1) = Rat(1);
    j.at(2 * i + 1, 2 * i) = Rat(-1);
  }
  while (true) {
    Mat<Rat> s(n, n);
    for (int r = 0; r < n; r++)
      for (int c = 0; c < n; c++) s.at(r, c) = rng.rational();
    if (rank(s) < n) continue;
    return s.transpose() * j * s;
  }
}

Mat<Rat> random_invertible(Rng& rng, int n) {
  for (;;) {
    Mat<Rat> s(n, n);
    for (int i = 0; i < n; i++)
      for (int j = 0; j < n; j++) s.at(i, j) = rng.rational(2, 1);
    if (n == 0 || bareiss_det(s) != 0) return s;
  }
}

// ---- exact operator families -------------------------------------------------

Mat<Rat> diag_rat(std::vector<Rat> d) {
  Mat<Rat> m(int(d.size()), int(d.size()));
  for (size_t i = 0; i < d.size(); i++) m.at(int(i), int(i)) = d[i];
  return m;
}

Mat<Rat> hadamard_pair(Rat d1, Rat d2) {
  Mat<Rat> m(2, 2);
  m.at(0, 0) = m.at(1, 1) = (d1 + d2) / 2;
  m.at(0, 1) = m.at(1, 0) = (d1 - d2) / 2;
  return m;
}

OperatorFamily<Rat> constant_rat_family(const Mat<Rat>& t, int samples) {
  return make_family(interval_grid(samples, 0, 1), std::vector<Mat<Rat>>(samples, t));
}

Cplx demo_mass(double th) { return Cplx{0.15, 0} + 0.5 * std::exp(Cplx{0, th}); }

// ---- cone retractions and conjugation perturbations ---------------------------

// Retraction of small + cones onto small, conjugated by a random change of
// basis in every degree of the big complex. Basis order in degree k:
// [small_k | cone tails starting at k | cone heads of cones from k-1].
Retraction<Rat> retraction_over(Rng& rng, const CochainComplex<Rat>& small, int lo, int hi,
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

  std::map<int, Mat<Rat>> g;
  for (int k = lo; k <= hi; k++) g[k] = random_invertible(rng, r.big.dim(k));
  Retraction<Rat> c;
  c.small = small;
  c.big.dims = r.big.dims;
  for (int k = lo; k <= hi; k++) {
    int vk = r.big.dim(k), vk1 = r.big.dim(k + 1), vkm = r.big.dim(k - 1);
    int wk = small.dim(k);
    Mat<Rat> gk = g.at(k);
    Mat<Rat> gkinv = vk ? inverse(gk) : gk;
    if (vk && vk1) {
      Mat<Rat> g1 = (k + 1 <= hi) ? g.at(k + 1) : Mat<Rat>::identity(vk1);
      c.big.set_diff(k, g1 * r.big.diff(k) * gkinv);
    }
    if (wk && vk) {
      c.iota.set_block(k, gk * r.iota.block(k, vk, wk));
      c.pi.set_block(k, r.pi.block(k, wk, vk) * gkinv);
    }
    if (vk && vkm) {
      Mat<Rat> gm = g.count(k - 1) ? g.at(k - 1) : Mat<Rat>::identity(vkm);
      c.eta.set_block(k, gm * r.eta.block(k, vkm, vk) * gkinv);
    }
  }
  return c;
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

// ---- criterion scaffolding ----------------------------------------------------

struct Tally {
  int checked = 0;
  int failed = 0;
  double worst = 0;

  void expect(bool ok) {
    checked++;
    if (!ok) failed++;
  }
  void bound(double residual, double tol) {
    worst = std::max(worst, residual);
    expect(residual <= tol);
  }
};

template <class F>
CriterionResult guarded(const char* key, const char* title, F&& fn) {
  CriterionResult r;
  r.key = key;
  r.title = title;
  auto t0 = Clock::now();
  try {
    fn(r);
  } catch (const std::exception& e) {
    r.pass = false;
    r.details["error"] = e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

// ---- 1: pfaffian squares, direct sums, degeneracy ------------------------------

CriterionResult crit_pfaffian_suite(uint64_t seed) {
  return guarded(
      "Section_2.1_pfaffian_suite",
      "pfaffian squares to the determinant, multiplies over direct sums, vanishes on "
      "degenerate forms (200 exact instances)",
      [&](CriterionResult& r) {
        Rng rng(seed ^ 0x5101);
        auto t0 = Clock::now();
        const int sizes[] = {2, 4, 6, 8, 10};
        Tally t;
        for (int i = 0; i < 200; i++) {
          int n = sizes[i % 5];
          SkewForm<Rat> a(random_skew(rng, n));
          Rat pf = pfaffian(a);
          t.expect(pf * pf == bareiss_det(a.a));

          SkewForm<Rat> b(random_skew(rng, (i % 2) ? 4 : 2));
          t.expect(pfaffian(direct_sum(a, b)) == pf * pfaffian(b));

          if (i % 2 == 0) {
            SkewForm<Rat> d(skew_with_kernel(rng, n, 2));
            t.expect(pfaffian(d) == Rat(0));
          }
        }
        double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        r.details["instances"] = 200;
        r.details["checks"] = t.checked;
        r.details["failed"] = t.failed;
        r.details["runtime_bound_seconds"] = 30;
        r.pass = t.failed == 0 && elapsed < 30;
        r.max_residual = t.failed ? 1 : 0;
      });
}

// ---- 2 + 3: splitting independence and the observable-complex composite --------

std::pair<CriterionResult, CriterionResult> crit_splitting_pair(uint64_t seed) {
  struct Shared {
    Tally indep;
    Tally iso;
    int nonzero = 0;
  } sh;

  CriterionResult r2 = guarded(
      "Lemma_2.3_splitting_independence",
      "kernel-coframe homomorphism is independent of the chosen complement (50 exact "
      "instances, kernel ranks 1..3)",
      [&](CriterionResult& r) {
        Rng rng(seed ^ 0x5202);
        const std::pair<int, int> shapes[] = {{3, 1}, {4, 2}, {5, 1}, {3, 3}, {5, 3}};
        for (int i = 0; i < 50; i++) {
          auto [n, k] = shapes[i % 5];
          SkewForm<Rat> a(skew_with_kernel(rng, n, k));
          Splitting<Rat> s1 = make_splitting(a);
          int kk = s1.kernel_basis.cols;
          sh.indep.expect(kk == k);

          // second splitting: same kernel, complement rotated and sheared
          // into the kernel directions
          Splitting<Rat> s2;
          s2.kernel_basis = s1.kernel_basis;
          Mat<Rat> rot = random_invertible(rng, n - kk);
          Mat<Rat> shear(kk, n - kk);
          for (int p = 0; p < kk; p++)
            for (int q = 0; q < n - kk; q++) shear.at(p, q) = rng.rational(2, 1);
          s2.complement_basis = s1.complement_basis * rot + s1.kernel_basis * shear;
          s2.validate(a);

          GenSpec wsp{kk, 0};
          Monomial wtop;
          wtop.xmask = (uint64_t(1) << kk) - 1;
          Element<Rat> omega = Element<Rat>::monomial(wsp, wtop, Rat(1));
          Rat v1 = pfaffian_hom(a, s1, omega);
          Rat v2 = pfaffian_hom(a, s2, omega);
          sh.indep.expect(v1 == v2);
          if (v1 != 0) sh.nonzero++;

          // composite through the truncated observable complex: include the
          // unit of the retracted line, multiply by e^A, read the top
          QuantumRetraction<Rat> q = quantum_retraction<Rat>(a, n, nullptr, false);
          Rat lhs =
              Element<Rat>(exp_nilpotent(a.as_element(q.cl.big_sp)) * q.iota_unit()).top_x_coeff();
          Element<Rat> omq = Element<Rat>::monomial(wsp, wtop, det(q.cl.pairing));
          Rat rhs = pfaffian_hom(a, Splitting<Rat>{q.cl.K, q.cl.C}, omq);
          sh.iso.expect(lhs == rhs);
          sh.iso.expect(lhs != 0);

          // the same scalar in the splitting-suite coframe, through the base
          // change between the two kernel bases
          Mat<Rat> k1t = s1.kernel_basis.transpose();
          Mat<Rat> base = inverse(Mat<Rat>(k1t * s1.kernel_basis)) * (k1t * q.cl.K);
          sh.iso.expect(lhs * bareiss_det(base) == det(q.cl.pairing) * v1);
        }
        r.details["instances"] = 50;
        r.details["failed"] = sh.indep.failed;
        r.pass = sh.indep.failed == 0;
        r.max_residual = sh.indep.failed ? 1 : 0;
      });

  CriterionResult r3;
  r3.key = "Lemma_2.4_pfaffian_isomorphism";
  r3.title =
      "kernel-coframe homomorphism is nonzero and equals the composite through the "
      "observable complex (same 50 instances)";
  r3.pass = sh.iso.failed == 0 && sh.nonzero == 50 && !r2.details.contains("error");
  r3.max_residual = r3.pass ? 0 : 1;
  r3.details["instances"] = 50;
  r3.details["nonzero"] = sh.nonzero;
  r3.details["failed"] = sh.iso.failed;
  if (r2.details.contains("error")) r3.details["error"] = r2.details["error"];
  return {std::move(r2), std::move(r3)};
}

// ---- 4: the second-order operator squares to zero and anticommutes -------------

CriterionResult crit_bv_identities(uint64_t seed) {
  return guarded(
      "Definition_2.9_bv_identities",
      "second-order contraction squares to zero and anticommutes with the linear "
      "differential, n <= 4, truncation <= 4, 20 random forms each",
      [&](CriterionResult& r) {
        Rng rng(seed ^ 0x5404);
        Tally t;
        for (int n = 1; n <= 4; n++)
          for (int N = 0; N <= 4; N++)
            for (int rep = 0; rep < 20; rep++) {
              SkewForm<Rat> a(random_skew(rng, n));
              GenSpec sp{n, n};
              StratifiedBasis<Rat> basis(sp, N);
              SecondOrderOp<Rat> delta = odd_laplacian<Rat>(sp);
              Derivation<Rat> aflat = a_flat_derivation(a);
              auto dd = [&](const Element<Rat>& f) { return delta.apply(delta.apply(f)); };
              auto anti = [&](const Element<Rat>& f) {
                return Element<Rat>(aflat.apply(delta.apply(f)) + delta.apply(aflat.apply(f)));
              };
              // both composites lower the xi-degree by two, so the block out
              // of strata 0 and 1 is checked term by term instead
              auto vanishes = [&](auto&& op, int j) {
                if (j >= 2) return basis.op_block(op, j, j - 2).is_zero();
                for (const Monomial& mo : basis.strata[j])
                  if (!op(Element<Rat>::monomial(sp, mo, Rat(1))).zero()) return false;
                return true;
              };
              for (int j = 0; j <= N; j++) {
                t.expect(vanishes(dd, j));
                t.expect(vanishes(anti, j));
              }
            }
        r.details["forms"] = 4 * 5 * 20;
        r.details["blocks"] = t.checked;
        r.details["failed"] = t.failed;
        r.pass = t.failed == 0;
        r.max_residual = t.failed ? 1 : 0;
      });
}

// ---- 5: transfer formulas across random retraction + perturbation pairs --------

CriterionResult crit_hpl_formulas(uint64_t seed) {
  return guarded(
      "Lemma_A.2_hpl_formulas",
      "perturbed retraction data passes every axiom exactly on 100 random instances; "
      "the zero perturbation changes nothing",
      [&](CriterionResult& r) {
        Rng rng(seed ^ 0x5505);
        Tally t;
        int done = 0, resampled = 0;
        while (done < 100) {
          Retraction<Rat> base = retraction_over(rng, random_zero_diff(rng, -1, 2, 2), -1, 2, 2);
          int total = 0;
          for (auto& [k, n] : base.big.dims) total += n;
          if (total > 24 || total == 0) {
            resampled++;
            continue;
          }
          Perturbation<Rat> p = conjugation_delta(rng, base.big);
          Retraction<Rat> out;
          try {
            out = perturb(base, p);
          } catch (const InvalidInput&) {
            resampled++;  // (1 - delta eta) happened to be singular
            continue;
          }
          t.expect(verify_retraction(out).ok());
          t.expect(cohomology_dims(out.small) == cohomology_dims(out.big));

          Retraction<Rat> same = perturb(base, Perturbation<Rat>{});
          bool identical = same.small.same_shape(base.small) && same.big.same_shape(base.big);
          for (int k = base.big.min_degree(); k <= base.big.max_degree() && identical; k++) {
            int wk = base.small.dim(k), vk = base.big.dim(k), vkm = base.big.dim(k - 1);
            identical =
                Mat<Rat>(same.iota.block(k, vk, wk) - base.iota.block(k, vk, wk)).is_zero() &&
                Mat<Rat>(same.pi.block(k, wk, vk) - base.pi.block(k, wk, vk)).is_zero() &&
                Mat<Rat>(same.eta.block(k, vkm, vk) - base.eta.block(k, vkm, vk)).is_zero();
          }
          t.expect(identical);
          done++;
        }
        r.details["instances"] = done;
        r.details["resampled"] = resampled;
        r.details["failed"] = t.failed;
        r.pass = t.failed == 0;
        r.max_residual = t.failed ? 1 : 0;
      });
}

// ---- 6: retraction onto the determinant line ------------------------------------

CriterionResult crit_quantum_retraction(uint64_t seed) {
  return guarded(
      "Proposition_2.12_quantum_retraction",
      "the quantum observables retract onto one dimension in degree zero; truncated "
      "cohomology is the line; the series and matrix routes agree on the unit",
      [&](CriterionResult& r) {
        Rng rng(seed ^ 0x5606);
        Tally t;
        const std::pair<int, int> shapes[] = {{1, 1}, {2, 0}, {2, 2}, {3, 1},
                                              {3, 3}, {4, 0}, {4, 2}, {4, 4}};
        for (auto [n, k] : shapes) {
          SkewForm<Rat> a(k == n ? Mat<Rat>(n, n) : skew_with_kernel(rng, n, k));
          int N = n + (n < 3 ? 1 : 0);
          QuantumRetraction<Rat> q = quantum_retraction(a, N);
          t.expect(q.has_matrices);
          int total = 0;
          for (auto& [deg, d] : q.matrices.small.dims) total += d;
          t.expect(total == 1 && q.matrices.small.dim(0) == 1);
          t.expect(verify_retraction(q.matrices).ok());

          Mat<Rat> unit_series = q.big.basis.coords(q.iota_unit(), 0);
          Mat<Rat> unit_matrix = q.matrices.iota.block(0, q.big.basis.dim(0), 1);
          t.expect(Mat<Rat>(unit_series - unit_matrix).is_zero());

          std::map<int, int> h = cohomology_dims(q.big.complex);
          for (auto& [deg, d] : h) {
            if (deg <= -N || d == 0) continue;  // truncation boundary stratum
            t.expect(deg == 0 && d == 1);
          }
          t.expect(h.count(0) == 1 && h.at(0) == 1);
        }
        r.details["instances"] = 8;
        r.details["failed"] = t.failed;
        r.pass = t.failed == 0;
        r.max_residual = t.failed ? 1 : 0;
      });
}

// ---- 7: fermionic integral of the exponential ------------------------------------

CriterionResult crit_berezin(uint64_t seed) {
  return guarded("Remark_2.13_berezin_partition",
                 "top-coefficient integral of e^A is the pfaffian and squares to the "
                 "determinant (100 exact instances)",
                 [&](CriterionResult& r) {
                   Rng rng(seed ^ 0x5707);
                   const int sizes[] = {2, 4, 6, 8};
                   Tally t;
                   for (int i = 0; i < 100; i++) {
                     SkewForm<Rat> a(random_skew(rng, sizes[i % 4]));
                     Rat b = berezin(exp_nilpotent(a.as_element()));
                     t.expect(b == pfaffian(a));
                     t.expect(b * b == bareiss_det(a.a));
                   }
                   r.details["instances"] = 100;
                   r.details["failed"] = t.failed;
                   r.pass = t.failed == 0;
                   r.max_residual = t.failed ? 1 : 0;
                 });
}

// ---- 8: stacked window retractions and their perturbations -----------------------

struct TowerInstance {
  Retraction<Rat> r1, r2;
  Perturbation<Rat> d2, d3;
};

// Two nested spectral windows of a constant diagonal family yield stacked
// retractions: ambient onto the wide window (r2) and wide onto the narrow
// one (r1, the wide-window data conjugated through the narrow inclusion).
// The perturbations are the odd laplacians of the ambient and wide algebras.
TowerInstance make_tower(Rng& rng, int p, int N, int rank_lo, int rank_hi) {
  std::vector<Rat> d(p);
  for (;;) {
    for (int i = 0; i < p; i++) d[i] = rng.rational_nonzero();
    bool distinct = true;
    for (int i = 0; i < p; i++)
      for (int j = i + 1; j < p; j++) distinct = distinct && d[i] * d[i] != d[j] * d[j];
    if (distinct) break;
  }
  OperatorFamily<Rat> fam = constant_rat_family(diag_rat(d), 2);

  std::vector<Rat> sq(p);
  for (int i = 0; i < p; i++) sq[i] = d[i] * d[i];
  std::sort(sq.begin(), sq.end());
  auto cut = [&](int rank) {
    return rank < p ? Rat((sq[rank - 1] + sq[rank]) / 2) : Rat(sq[p - 1] + 1);
  };
  CutoffChart<Rat> lo = window_cutoff(fam, Rat(-1), cut(rank_lo));
  CutoffChart<Rat> hi = window_cutoff(fam, Rat(-1), cut(rank_hi));
  ChartModel<Rat> low = chart_model_at(fam, lo, 0, N);
  ChartModel<Rat> high = chart_model_at(fam, hi, 0, N);

  BVComplex<Rat> amb_cl = build_bv(low.a_amb, N, BVVariant::Classical);
  BVComplex<Rat> shi_cl = build_bv(high.a_small, N, BVVariant::Classical);
  BVComplex<Rat> slo_cl = build_bv(low.a_small, N, BVVariant::Classical);

  TowerInstance inst;
  inst.r2 = sym_retraction_matrices(high.sym, amb_cl, shi_cl.complex);
  Retraction<Rat> rlam = sym_retraction_matrices(low.sym, amb_cl, slo_cl.complex);

  Retraction<Rat>& r1 = inst.r1;
  r1.big = inst.r2.small;
  r1.small = rlam.small;
  r1.exempt_degrees.insert(-N);
  for (int j = 0; j <= N; j++) {
    int k = -j;
    int bk = r1.big.dim(k), sk = r1.small.dim(k), vk = amb_cl.basis.dim(j);
    if (sk && bk) {
      r1.iota.set_block(k, inst.r2.pi.block(k, bk, vk) * rlam.iota.block(k, vk, sk));
      r1.pi.set_block(k, rlam.pi.block(k, sk, vk) * inst.r2.iota.block(k, vk, bk));
    }
    if (j < N) {
      int bk1 = r1.big.dim(k - 1), vk1 = amb_cl.basis.dim(j + 1);
      if (bk && bk1)
        r1.eta.set_block(k, inst.r2.pi.block(k - 1, bk1, vk1) * rlam.eta.block(k, vk1, vk) *
                                inst.r2.iota.block(k, vk, bk));
    }
  }

  SecondOrderOp<Rat> delta_amb = odd_laplacian<Rat>(low.amb);
  SecondOrderOp<Rat> delta_hi = odd_laplacian<Rat>(high.sym.small_sp);
  StratifiedBasis<Rat> shi_basis(high.sym.small_sp, N);
  for (int j = 1; j <= N; j++) {
    inst.d3.delta.set_block(
        -j,
        amb_cl.basis.op_block([&](const Element<Rat>& f) { return delta_amb.apply(f); }, j, j - 1));
    inst.d2.delta.set_block(
        -j, shi_basis.op_block([&](const Element<Rat>& f) { return delta_hi.apply(f); }, j, j - 1));
  }
  return inst;
}

CriterionResult crit_tower(uint64_t seed) {
  return guarded(
      "Lemma_A.4_tower",
      "stacked window perturbations: the induced differentials agree and the perturbed "
      "projections compose (50 exact tower instances)",
      [&](CriterionResult& r) {
        Rng rng(seed ^ 0x5808);
        Tally t;
        int preconditions_failed = 0;
        for (int i = 0; i < 50; i++) {
          int p = (i % 5 == 4) ? 3 : 2;
          int N = (p == 3) ? 1 : 1 + (i % 3);
          int rank_hi = int(rng.uniform(2, p));
          int rank_lo = int(rng.uniform(1, rank_hi - 1));
          TowerInstance inst = make_tower(rng, p, N, rank_lo, rank_hi);
          CompatibilityReport rep =
              check_projection_compatibility(inst.r1, inst.r2, inst.d2, inst.d3, 0.0);
          if (!rep.preconditions_ok()) preconditions_failed++;
          t.expect(rep.preconditions_ok());
          t.expect(rep.ok());
        }
        r.details["instances"] = 50;
        r.details["preconditions_failed"] = preconditions_failed;
        r.details["failed"] = t.failed;
        r.pass = t.failed == 0;
        r.max_residual = t.failed ? 1 : 0;
      });
}

// ---- 9: the eight-site loop --------------------------------------------------------

CriterionResult crit_det_bundle_demo(uint64_t) {
  return guarded(
      "Section_3.3_det_bundle_demo",
      "eight-site loop over 256 samples and three thresholds: cocycle, equivariance, "
      "zero set, winding against the eigenvalue flow",
      [&](CriterionResult& r) {
        auto t0 = Clock::now();
        Tally t;
        OperatorFamily<Cplx> fam = lattice_dirac_family(circle_grid(256), 8, demo_mass);
        DetLineBundle<Cplx> bundle = det_line_bundle(fam, {0.3, 1.1, 2.5}, 1e-9);
        SectionReport<Cplx> sec = det_section(fam, bundle);
        int flow = spectral_flow(fam);

        t.expect(bundle.cocycle_triples > 0);
        t.bound(bundle.max_cocycle_residual, 1e-9);
        t.bound(sec.max_equivariance_residual, 1e-9);
        for (int i = 0; i < fam.grid.size(); i++) {
          bool zero_listed = std::count(sec.zeros.begin(), sec.zeros.end(), i) > 0;
          t.expect(zero_listed == (sec.sigma_min[i] <= 1e-8));
        }
        t.expect(sec.zeros.empty());
        t.expect(sec.winding_defined);
        t.expect(sec.winding == flow);

        // a mass line through zero: the same loop with real cosine mass has
        // section zeros exactly at the kernel samples
        OperatorFamily<Cplx> fam2 = lattice_dirac_family(
            circle_grid(256), 8, [](double th) { return Cplx{std::cos(th), 0}; });
        DetLineBundle<Cplx> bundle2 = det_line_bundle(fam2, {0.3, 1.1, 2.5}, 1e-9);
        SectionReport<Cplx> sec2 = det_section(fam2, bundle2);
        t.expect(sec2.zeros == std::vector<int>{64, 192});
        for (int i = 0; i < fam2.grid.size(); i++) {
          Cplx v{0, 0};
          for (int k = int(bundle2.charts.size()); k-- > 0;)
            if (bundle2.charts[k].is_member(i)) {
              v = sec2.value[k][i];
              break;
            }
          bool zero_listed = std::count(sec2.zeros.begin(), sec2.zeros.end(), i) > 0;
          t.expect(zero_listed == (std::abs(v) < 1e-10));
        }

        double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        r.details["samples"] = 256;
        r.details["cocycle_triples"] = bundle.cocycle_triples;
        r.details["max_cocycle_residual"] = bundle.max_cocycle_residual;
        r.details["max_equivariance_residual"] = sec.max_equivariance_residual;
        r.details["winding"] = sec.winding;
        r.details["spectral_flow"] = flow;
        r.details["cosine_mass_zeros"] = sec2.zeros;
        r.details["runtime_bound_seconds"] = 60;
        r.details["failed"] = t.failed;
        r.pass = t.failed == 0 && elapsed < 60;
        r.max_residual = std::max(bundle.max_cocycle_residual, sec.max_equivariance_residual);
      });
}

// ---- 10: the finite model of the observable map --------------------------------------

CriterionResult crit_finite_model(uint64_t) {
  return guarded(
      "Theorem_1.1_finite_model",
      "the observable map sends the unit to the determinant section in every chart; the "
      "transition identity and its three sub-diagrams hold on every overlap",
      [&](CriterionResult& r) {
        Tally phi_t;

        // exact ladders: unit image against the section in every chart
        auto check_exact = [&]<class S>(const OperatorFamily<S>& fam,
                                        std::vector<RealOf<S>> thresholds) {
          DetLineBundle<S> bundle = det_line_bundle(fam, std::move(thresholds));
          SectionReport<S> sec = det_section(fam, bundle);
          for (size_t k = 0; k < bundle.charts.size(); k++)
            for (int i = 0; i < fam.grid.size(); i++) {
              if (!bundle.charts[k].is_member(i)) continue;
              ChartModel<S> mdl = chart_model_at(fam, bundle.charts[k], i, 2);
              phi_t.expect(mdl.has_section);
              phi_t.expect(mdl.phi_one() == sec.value[k][i]);
              phi_t.expect(mdl.section == sec.value[k][i]);
            }
        };
        check_exact(constant_rat_family(diag_rat({Rat(1, 2), Rat(3, 2), Rat(5, 2)}), 2),
                    {Rat(1), Rat(4), Rat(9)});
        check_exact(constant_rat_family(hadamard_pair(Rat(1), Rat(3)), 2), {Rat(4), Rat(16)});
        {
          Mat<GaussRat> g(2, 2);
          g.at(0, 0) = GaussRat{Rat(0), Rat(1)};
          g.at(1, 1) = GaussRat{Rat(1), Rat(1)};
          check_exact(make_family(interval_grid(2, 0, 1), std::vector<Mat<GaussRat>>{g, g}),
                      {Rat(3, 2), Rat(3)});
        }

        // a two-threshold toy with a moving rung: the transition identity at
        // every overlap sample, and the unit image in both charts
        Tally trans_t, sub_t;
        double worst = 0;
        json sub = json::object();
        {
          std::vector<Rat> rungs = {Rat(5, 4), Rat(3, 2), Rat(7, 4), Rat(2)};
          std::vector<Mat<Rat>> mats;
          for (const Rat& d2 : rungs) mats.push_back(diag_rat({Rat(1, 2), d2}));
          OperatorFamily<Rat> fam = make_family(interval_grid(4, 0, 1), std::move(mats));
          DetLineBundle<Rat> bundle = det_line_bundle(fam, {Rat(1), Rat(5)});
          SectionReport<Rat> sec = det_section(fam, bundle);
          const CutoffChart<Rat>& band = bundle.bands.at({0, 1});
          for (int i = 0; i < 4; i++) {
            const TransitionEntry<Rat>* tr = bundle.transition(0, 1, i);
            trans_t.expect(tr != nullptr);
            if (!tr) continue;
            ChartModel<Rat> low = chart_model_at(fam, bundle.charts[0], i, 2);
            ChartModel<Rat> high = chart_model_at(fam, bundle.charts[1], i, 2);
            TransitionCheck tc = verify_transition_identity(
                low, high, band.frame_plus(i), band.frame_minus(i), fam.dplus[i], tr->g, 48);
            trans_t.expect(tc.words > 0);
            trans_t.expect(tc.full_residual == 0);
            sub_t.expect(tc.embed_residual == 0);
            sub_t.expect(tc.top_residual == 0);
            sub_t.expect(tc.tower_residual == 0);
            phi_t.expect(low.phi_one() == sec.value[0][i]);
            phi_t.expect(high.phi_one() == sec.value[1][i]);
          }
          sub["exact_overlap_samples"] = 4;
        }

        // numeric two-site loop: the same identity inside tolerance
        {
          OperatorFamily<Cplx> fam = lattice_dirac_family(circle_grid(32), 2, demo_mass);
          CutoffChart<Cplx> lo = window_cutoff(fam, -1.0, 1.0);
          CutoffChart<Cplx> hi = window_cutoff(fam, -1.0, 6.0);
          CutoffChart<Cplx> band = window_cutoff(fam, 1.0, 6.0);
          std::vector<int> picks;
          for (int i = 0; i < 32 && int(picks.size()) < 5; i++)
            if (lo.is_member(i) && hi.is_member(i) && band.is_member(i)) picks.push_back(i);
          trans_t.expect(int(picks.size()) == 5);
          for (int i : picks) {
            ChartModel<Cplx> low = chart_model_at(fam, lo, i, 2, 1e-9);
            ChartModel<Cplx> high = chart_model_at(fam, hi, i, 2, 1e-9);
            Cplx g = transition_value(fam.dplus[i], lo.frame_plus(i), lo.frame_minus(i),
                                      band.frame_plus(i), band.frame_minus(i), hi.frame_plus(i),
                                      hi.frame_minus(i));
            TransitionCheck tc = verify_transition_identity(
                low, high, band.frame_plus(i), band.frame_minus(i), fam.dplus[i], g, 48, 1e-9);
            trans_t.bound(tc.full_residual, 1e-9);
            sub_t.bound(tc.embed_residual, 1e-9);
            sub_t.bound(tc.top_residual, 1e-9);
            sub_t.bound(tc.tower_residual, 1e-9);
            worst = std::max({worst, tc.full_residual, tc.embed_residual, tc.top_residual,
                              tc.tower_residual});
          }
          sub["numeric_overlap_samples"] = int(picks.size());
        }

        // the eight-site loop: unit image against the section, every eighth
        // sample in its widest chart and all charts on the axis samples
        double phi_worst = 0;
        {
          OperatorFamily<Cplx> fam = lattice_dirac_family(circle_grid(256), 8, demo_mass);
          DetLineBundle<Cplx> bundle = det_line_bundle(fam, {0.3, 1.1, 2.5}, 1e-9);
          SectionReport<Cplx> sec = det_section(fam, bundle);
          auto check_at = [&](size_t k, int i) {
            if (!bundle.charts[k].is_member(i)) return;
            ChartModel<Cplx> mdl = chart_model_at(fam, bundle.charts[k], i, 2, 1e-9);
            phi_t.expect(mdl.has_section);
            double resid = std::abs(mdl.phi_one() - sec.value[k][i]);
            phi_worst = std::max(phi_worst, resid);
            phi_t.expect(resid <= 1e-9);
          };
          for (int i = 0; i < 256; i += 8)
            for (size_t k = bundle.charts.size(); k-- > 0;)
              if (bundle.charts[k].is_member(i)) {
                check_at(k, i);
                break;
              }
          for (int i : {0, 64, 128, 192})
            for (size_t k = 0; k < bundle.charts.size(); k++) check_at(k, i);
        }

        r.details["Phi_one_checks"] = phi_t.checked;
        r.details["Phi_one_failed"] = phi_t.failed;
        r.details["Phi_one_numeric_worst"] = phi_worst;
        sub["failed"] = sub_t.failed;
        sub["max_residual"] = sub_t.worst;
        sub["pass"] = sub_t.failed == 0;
        r.details["Lemma_4.10_subdiagrams"] = sub;
        r.details["Eq_4.9_transition"] = json{
            {"failed", trans_t.failed}, {"max_residual", worst}, {"pass", trans_t.failed == 0}};
        r.pass = phi_t.failed == 0 && trans_t.failed == 0 && sub_t.failed == 0;
        r.max_residual = std::max(phi_worst, worst);
      });
}

// ---- 11: the transpose family pairs against the primal -------------------------------

CriterionResult crit_dual_cutoff(uint64_t) {
  return guarded(
      "Lemma_4.2_dual_cutoff",
      "transpose family: squared spectra agree and the window pairing stays "
      "nondegenerate at every sample",
      [&](CriterionResult& r) {
        Tally t;
        double worst_gap = 0;
        double least_det = std::numeric_limits<double>::infinity();
        auto run = [&](const OperatorFamily<Cplx>& f, double lo, double hi, int expect_samples) {
          DualPairingReport rep = dual_cutoff(f, lo, hi);
          t.expect(rep.samples_checked == expect_samples);
          t.bound(rep.max_spectrum_gap, 1e-10);
          t.expect(rep.min_rel_det > 1e-10);
          worst_gap = std::max(worst_gap, rep.max_spectrum_gap);
          least_det = std::min(least_det, rep.min_rel_det);
        };
        OperatorFamily<Cplx> fam = lattice_dirac_family(circle_grid(256), 8, demo_mass);
        run(fam, -1.0, 2.5, 256);
        run(fam, 0.3, 1.1, 256);

        // a rectangular loop of index one: the pairing still closes
        BaseGrid grid = circle_grid(12);
        std::vector<Mat<Cplx>> mats;
        for (double th : grid.theta) {
          Mat<Cplx> m(2, 1);
          m.at(0, 0) = Cplx{1, 0};
          m.at(1, 0) = Cplx{std::cos(th), std::sin(th)};
          mats.push_back(std::move(m));
        }
        run(make_family(grid, std::move(mats)), 0.5, 3.0, 12);

        r.details["max_spectrum_gap"] = worst_gap;
        r.details["min_rel_det"] = least_det;
        r.details["failed"] = t.failed;
        r.pass = t.failed == 0;
        r.max_residual = worst_gap;
      });
}

}  // namespace

json AcceptanceReport::to_json() const {
  json out;
  out["seed"] = seed;
  out["pass"] = ok();
  json checks = json::object();
  for (const auto& r : results) {
    json c{{"title", r.title}, {"pass", r.pass}, {"max_residual", r.max_residual}};
    if (!r.details.empty()) c["details"] = r.details;
    checks[r.key] = std::move(c);
  }
  out["criteria"] = std::move(checks);
  return out;
}

AcceptanceReport run_acceptance(uint64_t seed) {
  AcceptanceReport rep;
  rep.seed = seed;
  rep.results.push_back(crit_pfaffian_suite(seed));
  auto [r2, r3] = crit_splitting_pair(seed);
  rep.results.push_back(std::move(r2));
  rep.results.push_back(std::move(r3));
  rep.results.push_back(crit_bv_identities(seed));
  rep.results.push_back(crit_hpl_formulas(seed));
  rep.results.push_back(crit_quantum_retraction(seed));
  rep.results.push_back(crit_berezin(seed));
  rep.results.push_back(crit_tower(seed));
  rep.results.push_back(crit_det_bundle_demo(seed));
  rep.results.push_back(crit_finite_model(seed));
  rep.results.push_back(crit_dual_cutoff(seed));
  return rep;
}

}  // namespace bvdet
