#include "doctest.h"

#include <cmath>

#include "bvdet/exact_eigen.hpp"
#include "bvdet/family.hpp"
#include "bvdet/rng.hpp"

using namespace bvdet;

namespace {

const double kPi = std::acos(-1.0);

Cplx demo_mass(double th) { return Cplx{0.15, 0} + 0.5 * Cplx{std::cos(th), std::sin(th)}; }

OperatorFamily<Rat> constant_rat_family(const Mat<Rat>& t, int samples) {
  return make_family(interval_grid(samples, 0, 1), std::vector<Mat<Rat>>(samples, t));
}

Mat<Rat> diag_rat(std::vector<Rat> d) {
  Mat<Rat> m(int(d.size()), int(d.size()));
  for (size_t i = 0; i < d.size(); i++) m.at(int(i), int(i)) = d[i];
  return m;
}

// symmetric 2 x 2 with eigenvalues d1, d2 in the basis (1,1), (1,-1), so the
// window frames come out with a nontrivial length
Mat<Rat> hadamard_pair(Rat d1, Rat d2) {
  Mat<Rat> m(2, 2);
  m.at(0, 0) = m.at(1, 1) = (d1 + d2) / 2;
  m.at(0, 1) = m.at(1, 0) = (d1 - d2) / 2;
  return m;
}

template <class S>
bool mats_equal(const Mat<S>& a, const Mat<S>& b) {
  return a.rows == b.rows && a.cols == b.cols && Mat<S>(a - b).is_zero();
}

}  // namespace

TEST_CASE("characteristic polynomial and exact hermitian spectra") {
  Mat<Rat> d = diag_rat({Rat(2), Rat(-1), Rat(3)});
  auto cp = char_poly(d);
  // (x-2)(x+1)(x-3) = x^3 - 4x^2 + x + 6
  REQUIRE(cp.size() == 4);
  CHECK(cp[0] == Rat(6));
  CHECK(cp[1] == Rat(1));
  CHECK(cp[2] == Rat(-4));
  CHECK(cp[3] == Rat(1));

  ExactEigen<Rat> ed = eigen_exact_hermitian(d);
  REQUIRE(ed.evals.size() == 3);
  CHECK(ed.evals[0] == Rat(-1));
  CHECK(ed.evals[1] == Rat(2));
  CHECK(ed.evals[2] == Rat(3));
  for (size_t k = 0; k < ed.evals.size(); k++) {
    Mat<Rat> v = ed.vecs.cols_range(int(k), int(k) + 1);
    CHECK(mats_equal(Mat<Rat>(d * v), Mat<Rat>(ed.evals[k] * v)));
  }

  Mat<Rat> h(2, 2);
  h.at(0, 0) = h.at(1, 1) = Rat(2);
  h.at(0, 1) = h.at(1, 0) = Rat(3);
  ExactEigen<Rat> eh = eigen_exact_hermitian(h);
  REQUIRE(eh.evals.size() == 2);
  CHECK(eh.evals[0] == Rat(-1));
  CHECK(eh.evals[1] == Rat(5));

  // repeated eigenvalue keeps its full eigenspace
  ExactEigen<Rat> ei = eigen_exact_hermitian(Mat<Rat>(Rat(7) * Mat<Rat>::identity(3)));
  REQUIRE(ei.evals.size() == 3);
  CHECK(ei.evals[1] == Rat(7));
  CHECK(rank(ei.vecs) == 3);

  Mat<GaussRat> g(2, 2);
  g.at(0, 0) = g.at(1, 1) = GaussRat(Rat(2));
  g.at(0, 1) = GaussRat{Rat(0), Rat(1)};
  g.at(1, 0) = GaussRat{Rat(0), Rat(-1)};
  ExactEigen<GaussRat> eg = eigen_exact_hermitian(g);
  REQUIRE(eg.evals.size() == 2);
  CHECK(eg.evals[0] == Rat(1));
  CHECK(eg.evals[1] == Rat(3));
  for (int k = 0; k < 2; k++) {
    Mat<GaussRat> v = eg.vecs.cols_range(k, k + 1);
    CHECK(mats_equal(Mat<GaussRat>(g * v),
                     Mat<GaussRat>(ScalarOps<GaussRat>::from_rat(eg.evals[k]) * v)));
  }

  // golden-ratio spectrum is not rational
  Mat<Rat> bad(2, 2);
  bad.at(0, 1) = bad.at(1, 0) = bad.at(1, 1) = Rat(1);
  CHECK_THROWS_AS((void)eigen_exact_hermitian(bad), InvalidInput);
  // and non-hermitian input is rejected outright
  Mat<Rat> nh(2, 2);
  nh.at(0, 1) = Rat(1);
  CHECK_THROWS_AS((void)eigen_exact_hermitian(nh), InvalidInput);
}

TEST_CASE("parameter grids") {
  BaseGrid c = circle_grid(4);
  CHECK(c.size() == 4);
  CHECK(c.next(3) == 0);
  CHECK(c.edges().size() == 4);
  CHECK(c.theta[2] == doctest::Approx(kPi));

  BaseGrid iv = interval_grid(3, 0, 1);
  CHECK(iv.next(2) == -1);
  CHECK(iv.edges().size() == 2);
  CHECK(iv.theta[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS((void)make_family(circle_grid(2), std::vector<Mat<Cplx>>{Mat<Cplx>(1, 1)}),
                  InvalidInput);
  CHECK_THROWS_AS(
      (void)make_family(circle_grid(2), std::vector<Mat<Cplx>>{Mat<Cplx>(1, 1), Mat<Cplx>(2, 1)}),
      InvalidInput);
}

TEST_CASE("window membership, ranks and components on scalar loops") {
  OperatorFamily<Cplx> unit =
      scalar_family(circle_grid(8), [](double th) { return Cplx{std::cos(th), std::sin(th)}; });
  CutoffChart<Cplx> ch = window_cutoff(unit, 0.5, 2.0);
  REQUIRE(ch.components.size() == 1);
  CHECK(ch.components[0].samples.size() == 8);
  for (int i = 0; i < 8; i++) {
    CHECK(ch.is_member(i));
    CHECK(ch.rank_plus(i) == 1);
    CHECK(ch.rank_minus(i) == 1);
    CHECK(std::abs(ch.frame_plus(i).at(0, 0)) == doctest::Approx(1.0));
  }

  // cos(theta): the window rank drops to zero where the singular value dives
  OperatorFamily<Cplx> co =
      scalar_family(circle_grid(8), [](double th) { return Cplx{std::cos(th), 0}; });
  CutoffChart<Cplx> cc = window_cutoff(co, 0.1, 2.0);
  for (int i = 0; i < 8; i++) CHECK(cc.is_member(i));
  CHECK(cc.rank_plus(2) == 0);
  CHECK(cc.rank_plus(6) == 0);
  CHECK(cc.rank_plus(0) == 1);
  CHECK(cc.components.size() == 4);
  bool found_wrap = false;
  for (auto& comp : cc.components)
    if (comp.samples.size() == 3 && comp.samples[0] == 7) found_wrap = true;
  CHECK(found_wrap);

  // exact windows exclude boundary hits by equality, nothing else
  OperatorFamily<Rat> one = constant_rat_family(diag_rat({Rat(1)}), 2);
  CutoffChart<Rat> on_edge = window_cutoff(one, Rat(1), Rat(4));
  CHECK(!on_edge.is_member(0));
  CutoffChart<Rat> inside = window_cutoff(one, Rat(1, 2), Rat(4));
  CHECK(inside.is_member(0));
  CHECK(inside.rank_plus(0) == 1);
  CHECK_THROWS_AS((void)on_edge.comp(0), InvalidInput);
}

TEST_CASE("a window below the whole spectrum keeps rank zero and section one") {
  OperatorFamily<Cplx> fam = lattice_dirac_family(circle_grid(16), 2, demo_mass);
  CutoffChart<Cplx> ch = window_cutoff(fam, 1e-6, 0.05);
  REQUIRE(ch.components.size() == 1);
  for (int i = 0; i < 16; i++) {
    CHECK(ch.is_member(i));
    CHECK(ch.rank_plus(i) == 0);
    CHECK(ch.rank_minus(i) == 0);
    Cplx s = section_value(fam.dplus[i], ch.frame_plus(i), ch.frame_minus(i));
    CHECK(std::abs(s - Cplx{1, 0}) == doctest::Approx(0.0));
  }
}

TEST_CASE("two-site loop at unit cutoff: one wrapping component, continuous frames") {
  OperatorFamily<Cplx> fam = lattice_dirac_family(circle_grid(64), 2, demo_mass);
  CutoffChart<Cplx> ch = window_cutoff(fam, 0.0, 1.0);
  REQUIRE(ch.components.size() == 1);
  const ChartComponent<Cplx>& comp = ch.components[0];
  CHECK(comp.samples.size() == 64);
  CHECK(comp.rank_plus == 1);
  CHECK(comp.rank_minus == 1);
  CHECK(comp.projector_residual < 1e-12);
  for (size_t k = 0; k + 1 < comp.fplus.size(); k++) {
    Cplx dot{0, 0};
    for (int i = 0; i < 2; i++) dot += std::conj(comp.fplus[k].at(i, 0)) * comp.fplus[k + 1].at(i, 0);
    CHECK(std::abs(dot) > 0.9);
    CHECK(dot.real() > 0.5);
  }
}

TEST_CASE("frame transport rejects a collapsing projection") {
  Mat<Cplx> z(2, 1);
  CHECK_THROWS_AS((void)detail::orthonormalize(z), InvalidInput);
}

TEST_CASE("determinant line of a diagonal rational ladder") {
  Mat<Rat> t = diag_rat({Rat(1, 2), Rat(3, 2), Rat(5, 2)});
  OperatorFamily<Rat> fam = constant_rat_family(t, 2);
  DetLineBundle<Rat> bundle = det_line_bundle(fam, {Rat(1), Rat(4), Rat(9)});

  CHECK(bundle.max_cocycle_residual == 0);
  CHECK(bundle.cocycle_triples == 2);
  CHECK(bundle.max_projector_gap == 0);
  REQUIRE(bundle.transition(0, 1, 0) != nullptr);
  CHECK(bundle.transition(0, 1, 0)->g == Rat(-3, 2));
  CHECK(bundle.transition(1, 2, 0)->g == Rat(5, 2));
  CHECK(bundle.transition(0, 2, 0)->g == Rat(-15, 4));
  CHECK(bundle.transition(0, 1, 0)->band_rank == 1);
  CHECK(bundle.transition(0, 2, 0)->band_rank == 2);

  SectionReport<Rat> sec = det_section(fam, bundle);
  CHECK(sec.max_equivariance_residual == 0);
  CHECK(sec.zeros.empty());
  CHECK(sec.value[0][0] == Rat(1, 2));
  CHECK(sec.value[1][0] == Rat(-3, 4));
  CHECK(sec.value[2][0] == Rat(-15, 8));
  CHECK(!sec.winding_defined);  // interval base, no loop to wind around
}

TEST_CASE("hadamard-conjugated ladder exercises the frame weighting") {
  Mat<Rat> t = hadamard_pair(Rat(1), Rat(3));
  OperatorFamily<Rat> fam = constant_rat_family(t, 2);
  DetLineBundle<Rat> bundle = det_line_bundle(fam, {Rat(4), Rat(16)});

  REQUIRE(bundle.transition(0, 1, 0) != nullptr);
  CHECK(bundle.transition(0, 1, 0)->g == Rat(-3, 2));
  SectionReport<Rat> sec = det_section(fam, bundle);
  CHECK(sec.value[0][0] == Rat(1, 2));
  CHECK(sec.value[1][0] == Rat(-3, 4));
  CHECK(sec.max_equivariance_residual == 0);

  // the chart model reproduces the section through the observable map
  for (int k = 0; k < 2; k++) {
    ChartModel<Rat> mdl = chart_model_at(fam, bundle.charts[k], 0, 2);
    REQUIRE(mdl.has_section);
    CHECK(mdl.section == sec.value[k][0]);
    CHECK(mdl.phi_one() == sec.value[k][0]);
    CHECK(mats_equal(mdl.sym.small_form, skew_extension(mdl.window_map).a));
  }
}

TEST_CASE("gaussian rational ladder") {
  Mat<GaussRat> t(2, 2);
  t.at(0, 0) = GaussRat{Rat(0), Rat(1)};       // i
  t.at(1, 1) = GaussRat{Rat(1), Rat(1)};       // 1 + i
  OperatorFamily<GaussRat> fam = make_family(interval_grid(2, 0, 1), std::vector<Mat<GaussRat>>{t, t});
  DetLineBundle<GaussRat> bundle = det_line_bundle(fam, {Rat(3, 2), Rat(3)});

  GaussRat minus_c{Rat(-1), Rat(-1)};  // -(1+i)
  REQUIRE(bundle.transition(0, 1, 0) != nullptr);
  CHECK(bundle.transition(0, 1, 0)->g == minus_c);
  SectionReport<GaussRat> sec = det_section(fam, bundle);
  CHECK(sec.value[0][0] == GaussRat{Rat(0), Rat(1)});
  CHECK(sec.value[1][0] == GaussRat{Rat(1), Rat(-1)});
  CHECK(sec.max_equivariance_residual == 0);

  ChartModel<GaussRat> mdl = chart_model_at(fam, bundle.charts[0], 0, 2);
  CHECK(mdl.phi_one() == sec.value[0][0]);
}

TEST_CASE("chart retraction passes the matrix-level axioms") {
  // exact, with a genuinely weighted frame
  Mat<Rat> t = hadamard_pair(Rat(1), Rat(3));
  OperatorFamily<Rat> fam = constant_rat_family(t, 2);
  CutoffChart<Rat> ch = window_cutoff(fam, Rat(0), Rat(4));
  ChartModel<Rat> mdl = chart_model_at(fam, ch, 0, 2);
  BVComplex<Rat> big = build_bv(mdl.a_amb, 2, BVVariant::Classical);
  CochainComplex<Rat> small_diff = build_bv(mdl.a_small, 2, BVVariant::Classical).complex;
  AxiomReport rep = verify_retraction(sym_retraction_matrices(mdl.sym, big, small_diff));
  CHECK(rep.ok());
  CHECK(rep.max_residual() == 0);

  // numeric, on a lattice loop sample
  OperatorFamily<Cplx> nfam = lattice_dirac_family(circle_grid(16), 2, demo_mass);
  CutoffChart<Cplx> nch = window_cutoff(nfam, 0.0, 1.0);
  ChartModel<Cplx> nmdl = chart_model_at(nfam, nch, 3, 2, 1e-9);
  BVComplex<Cplx> nbig = build_bv(nmdl.a_amb, 2, BVVariant::Classical, 1e-9);
  CochainComplex<Cplx> nsmall = build_bv(nmdl.a_small, 2, BVVariant::Classical, 1e-9).complex;
  AxiomReport nrep = verify_retraction(sym_retraction_matrices(nmdl.sym, nbig, nsmall), 1e-9);
  CHECK(nrep.ok());
}

TEST_CASE("transition identity between two exact windows") {
  auto run_exact = [](const Mat<Rat>& t, Rat lam, Rat mu) {
    OperatorFamily<Rat> fam = constant_rat_family(t, 2);
    CutoffChart<Rat> lo = window_cutoff(fam, Rat(-1), lam);
    CutoffChart<Rat> hi = window_cutoff(fam, Rat(-1), mu);
    CutoffChart<Rat> band = window_cutoff(fam, lam, mu);
    ChartModel<Rat> low = chart_model_at(fam, lo, 0, 2);
    ChartModel<Rat> high = chart_model_at(fam, hi, 0, 2);
    Rat g = transition_value(t, lo.frame_plus(0), lo.frame_minus(0), band.frame_plus(0),
                             band.frame_minus(0), hi.frame_plus(0), hi.frame_minus(0));
    TransitionCheck tc = verify_transition_identity(low, high, band.frame_plus(0),
                                                    band.frame_minus(0), t, g, 48);
    CHECK(tc.embed_residual == 0);
    CHECK(tc.top_residual == 0);
    CHECK(tc.tower_residual == 0);
    CHECK(tc.full_residual == 0);
    CHECK(tc.words > 0);
    return g;
  };

  CHECK(run_exact(diag_rat({Rat(1, 2), Rat(3, 2)}), Rat(1), Rat(4)) == Rat(-3, 2));
  CHECK(run_exact(hadamard_pair(Rat(1), Rat(3)), Rat(4), Rat(16)) == Rat(-3, 2));

  Mat<GaussRat> t(2, 2);
  t.at(0, 0) = GaussRat{Rat(0), Rat(1)};
  t.at(1, 1) = GaussRat{Rat(1), Rat(1)};
  OperatorFamily<GaussRat> fam = make_family(interval_grid(2, 0, 1), std::vector<Mat<GaussRat>>{t, t});
  CutoffChart<GaussRat> lo = window_cutoff(fam, Rat(-1), Rat(3, 2));
  CutoffChart<GaussRat> hi = window_cutoff(fam, Rat(-1), Rat(3));
  CutoffChart<GaussRat> band = window_cutoff(fam, Rat(3, 2), Rat(3));
  ChartModel<GaussRat> low = chart_model_at(fam, lo, 0, 2);
  ChartModel<GaussRat> high = chart_model_at(fam, hi, 0, 2);
  GaussRat g = transition_value(t, lo.frame_plus(0), lo.frame_minus(0), band.frame_plus(0),
                                band.frame_minus(0), hi.frame_plus(0), hi.frame_minus(0));
  CHECK(g == GaussRat{Rat(-1), Rat(-1)});
  TransitionCheck tc =
      verify_transition_identity(low, high, band.frame_plus(0), band.frame_minus(0), t, g, 48);
  CHECK(tc.embed_residual == 0);
  CHECK(tc.top_residual == 0);
  CHECK(tc.tower_residual == 0);
  CHECK(tc.full_residual == 0);
}

TEST_CASE("transition identity between two numeric windows") {
  OperatorFamily<Cplx> fam = lattice_dirac_family(circle_grid(32), 2, demo_mass);
  CutoffChart<Cplx> lo = window_cutoff(fam, -1.0, 1.0);
  CutoffChart<Cplx> hi = window_cutoff(fam, -1.0, 6.0);
  CutoffChart<Cplx> band = window_cutoff(fam, 1.0, 6.0);
  int i = 5;
  ChartModel<Cplx> low = chart_model_at(fam, lo, i, 2, 1e-9);
  ChartModel<Cplx> high = chart_model_at(fam, hi, i, 2, 1e-9);
  Cplx g = transition_value(fam.dplus[i], lo.frame_plus(i), lo.frame_minus(i),
                            band.frame_plus(i), band.frame_minus(i), hi.frame_plus(i),
                            hi.frame_minus(i));
  TransitionCheck tc = verify_transition_identity(low, high, band.frame_plus(i),
                                                  band.frame_minus(i), fam.dplus[i], g, 48, 1e-9);
  CHECK(tc.embed_residual < 1e-9);
  CHECK(tc.top_residual < 1e-9);
  CHECK(tc.tower_residual < 1e-9);
  CHECK(tc.full_residual < 1e-9);
}

TEST_CASE("observable map kills the differential and matches the berezin ratio") {
  Mat<Rat> t = hadamard_pair(Rat(1), Rat(3));
  OperatorFamily<Rat> fam = constant_rat_family(t, 2);
  CutoffChart<Rat> ch = window_cutoff(fam, Rat(0), Rat(4));
  ChartModel<Rat> mdl = chart_model_at(fam, ch, 0, 2);

  Derivation<Rat> aflat = a_flat_derivation(mdl.a_amb);
  StratifiedBasis<Rat> basis(mdl.amb, 2);
  int used = 0;
  for (int j = 0; j <= 2 && used < 60; j++)
    for (int i = 0; i < basis.dim(j) && used < 60; i++, used++) {
      Element<Rat> w = Element<Rat>::monomial(mdl.amb, basis.strata[j][i], Rat(1));
      Element<Rat> dw = aflat.apply(w) + mdl.delta_amb.apply(w);
      CHECK(ScalarOps<Rat>::is_zero(mdl.phi(dw)));
    }

  // ratios of the chart map against the plain fermionic pairing on closed
  // degree-zero observables
  Element<Rat> exp_amb = exp_nilpotent(mdl.a_amb.as_element(mdl.amb));
  Rat b_one = exp_amb.top_x_coeff();
  REQUIRE(!ScalarOps<Rat>::is_zero(b_one));
  Rat phi_one = mdl.phi_one();
  for (int i = 0; i < mdl.amb.n; i++)
    for (int j = i + 1; j < mdl.amb.n; j++) {
      Element<Rat> f = Element<Rat>::gen_x(mdl.amb, i) * Element<Rat>::gen_x(mdl.amb, j);
      Rat b_f = Element<Rat>(f * exp_amb).top_x_coeff();
      CHECK(mdl.phi(f) * b_one == phi_one * b_f);
    }
}

TEST_CASE("dual pairing of a rectangular loop, and the section refusing it") {
  BaseGrid grid = circle_grid(12);
  std::vector<Mat<Cplx>> mats;
  for (double th : grid.theta) {
    Mat<Cplx> m(2, 1);
    m.at(0, 0) = Cplx{1, 0};
    m.at(1, 0) = Cplx{std::cos(th), std::sin(th)};
    mats.push_back(std::move(m));
  }
  OperatorFamily<Cplx> fam = make_family(grid, std::move(mats));

  DualPairingReport rep = dual_cutoff(fam, 0.5, 3.0);
  CHECK(rep.samples_checked == 12);
  CHECK(rep.max_spectrum_gap < 1e-10);
  CHECK(rep.min_rel_det > 1e-10);

  DetLineBundle<Cplx> bundle = det_line_bundle(fam, {3.0});
  CHECK(bundle.transitions.empty());
  CHECK_THROWS_AS((void)det_section(fam, bundle), InvalidInput);
}

TEST_CASE("winding matches the flow of eigenvalues through the negative ray") {
  auto scalar_loop = [](int n, const std::function<Cplx(double)>& f) {
    return scalar_family(circle_grid(n), f);
  };
  auto winding_of = [](const OperatorFamily<Cplx>& fam, double hi) {
    DetLineBundle<Cplx> b = det_line_bundle(fam, {hi});
    SectionReport<Cplx> s = det_section(fam, b);
    REQUIRE(s.winding_defined);
    return s.winding;
  };

  OperatorFamily<Cplx> once =
      scalar_loop(16, [](double th) { return Cplx{std::cos(th), std::sin(th)}; });
  CHECK(winding_of(once, 2.0) == 1);
  CHECK(spectral_flow(once) == 1);

  OperatorFamily<Cplx> twice =
      scalar_loop(32, [](double th) { return Cplx{std::cos(2 * th), std::sin(2 * th)}; });
  CHECK(winding_of(twice, 2.0) == 2);
  CHECK(spectral_flow(twice) == 2);

  OperatorFamily<Cplx> none =
      scalar_loop(16, [](double th) { return Cplx{2 + std::cos(th), std::sin(th)}; });
  CHECK(winding_of(none, 10.0) == 0);
  CHECK(spectral_flow(none) == 0);
}

TEST_CASE("flow counter is robust to paths touching the real axis exactly") {
  // hexagon around the origin with exact real-axis points on both sides
  std::vector<Cplx> hex = {{-1, 1}, {-1, 0}, {-1, -1}, {1, -1}, {1, 0}, {1, 1}};
  std::vector<Mat<Cplx>> mats;
  for (const Cplx& z : hex) {
    Mat<Cplx> m(1, 1);
    m.at(0, 0) = z;
    mats.push_back(std::move(m));
  }
  OperatorFamily<Cplx> loop = make_family(circle_grid(6), std::move(mats));
  CHECK(spectral_flow(loop) == 1);

  // touch the ray and return: no net crossing
  std::vector<Cplx> touch = {{0, 1}, {-1, 0}, {0, 1}, {-1, 0}};
  std::vector<Mat<Cplx>> tm;
  for (const Cplx& z : touch) {
    Mat<Cplx> m(1, 1);
    m.at(0, 0) = z;
    tm.push_back(std::move(m));
  }
  CHECK(spectral_flow(make_family(circle_grid(4), std::move(tm))) == 0);
}

TEST_CASE("zeros of the section sit where the smallest singular value dies") {
  OperatorFamily<Cplx> fam =
      lattice_dirac_family(circle_grid(16), 4, [](double th) { return Cplx{std::cos(th), 0}; });
  DetLineBundle<Cplx> bundle = det_line_bundle(fam, {1.5, 6.0});
  SectionReport<Cplx> sec = det_section(fam, bundle);
  CHECK(sec.zeros == std::vector<int>{4, 12});
  CHECK(!sec.winding_defined);
  CHECK(sec.max_equivariance_residual < 1e-9);
}

TEST_CASE("eight-site loop: bundle, section, winding and flow") {
  OperatorFamily<Cplx> fam = lattice_dirac_family(circle_grid(256), 8, demo_mass);
  DetLineBundle<Cplx> bundle = det_line_bundle(fam, {0.3, 1.1, 2.5});

  CHECK(bundle.max_cocycle_residual <= 1e-9);
  CHECK(bundle.cocycle_triples > 0);
  CHECK(bundle.max_projector_gap < 1e-8);
  for (const auto& ch : bundle.charts) {
    // no sample sits on a window boundary, but the ranks jump along the loop
    for (int i = 0; i < fam.grid.size(); i++) CHECK(ch.is_member(i));
    CHECK(ch.components.size() > 1);
    int rank_lo = ch.components[0].rank_plus, rank_hi = rank_lo;
    for (const auto& comp : ch.components) {
      rank_lo = std::min(rank_lo, comp.rank_plus);
      rank_hi = std::max(rank_hi, comp.rank_plus);
    }
    CHECK(rank_lo < rank_hi);
  }

  SectionReport<Cplx> sec = det_section(fam, bundle);
  CHECK(sec.zeros.empty());
  CHECK(sec.max_equivariance_residual <= 1e-9);
  REQUIRE(sec.winding_defined);
  CHECK(sec.winding == 1);
  CHECK(spectral_flow(fam) == sec.winding);

  DualPairingReport dual = dual_cutoff(fam, 0.3, 2.5);
  CHECK(dual.max_spectrum_gap < 1e-10);
  CHECK(dual.min_rel_det > 1e-10);

  // chart model at a member sample of the middle chart agrees with the section
  const CutoffChart<Cplx>& ch = bundle.charts[1];
  int sample = -1;
  for (int i = 0; i < fam.grid.size() && sample < 0; i++)
    if (ch.is_member(i)) sample = i;
  REQUIRE(sample >= 0);
  ChartModel<Cplx> mdl = chart_model_at(fam, ch, sample, 2, 1e-9);
  REQUIRE(mdl.has_section);
  CHECK(std::abs(mdl.phi_one() - sec.value[1][sample]) < 1e-11);
}

TEST_CASE("bundle construction rejects gaps in the cover") {
  OperatorFamily<Rat> fam = constant_rat_family(diag_rat({Rat(1)}), 2);
  // the only threshold hits the spectrum exactly, so no chart contains it
  CHECK_THROWS_AS((void)det_line_bundle(fam, {Rat(1)}), InvalidInput);
  CHECK_THROWS_AS((void)det_line_bundle(fam, std::vector<Rat>{}), InvalidInput);
  CHECK_THROWS_AS((void)det_line_bundle(fam, {Rat(4), Rat(2)}), InvalidInput);
}
