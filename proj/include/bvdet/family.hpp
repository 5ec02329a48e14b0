#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <map>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bvdet/bv.hpp"
#include "bvdet/exact_eigen.hpp"
#include "bvdet/matrix.hpp"
#include "bvdet/pfaffian.hpp"

namespace bvdet {

// Discretized parameter space: sample points chained linearly or closed into
// a loop. theta carries the parameter values for the built-in generators;
// families given by explicit matrices only use the ordering.
enum class GridKind { Circle, Interval };

struct BaseGrid {
  GridKind kind = GridKind::Circle;
  std::vector<double> theta;

  int size() const { return int(theta.size()); }
  bool closed() const { return kind == GridKind::Circle; }
  int next(int i) const {
    if (closed()) return (i + 1) % size();
    return (i + 1 < size()) ? i + 1 : -1;
  }
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i + 1 < size(); i++) e.push_back({i, i + 1});
    if (closed() && size() > 1) e.push_back({size() - 1, 0});
    return e;
  }
};

BaseGrid circle_grid(int n);
BaseGrid interval_grid(int n, double a, double b);

// A family of rectangular operators over the grid, one matrix per sample,
// all of one shape. The matrix at sample i is the odd block D+ of the
// self-adjoint operator it abbreviates.
template <class S>
struct OperatorFamily {
  BaseGrid grid;
  std::vector<Mat<S>> dplus;

  int rows() const { return dplus.empty() ? 0 : dplus[0].rows; }
  int cols() const { return dplus.empty() ? 0 : dplus[0].cols; }
};

template <class S>
OperatorFamily<S> make_family(BaseGrid grid, std::vector<Mat<S>> mats) {
  if (mats.empty() || int(mats.size()) != grid.size())
    throw InvalidInput("family needs one matrix per grid sample");
  for (const auto& m : mats)
    if (m.rows != mats[0].rows || m.cols != mats[0].cols)
      throw InvalidInput("family matrices must share one shape");
  OperatorFamily<S> f;
  f.grid = std::move(grid);
  f.dplus = std::move(mats);
  return f;
}

OperatorFamily<Cplx> scalar_family(const BaseGrid& grid, const std::function<Cplx(double)>& f);

// cyclic nearest-neighbour difference plus a position-independent mass term:
// D+(theta) = (shift - 1) + m(theta), diagonalized by the discrete Fourier
// modes with eigenvalues m(theta) - (1 - omega_k)
OperatorFamily<Cplx> lattice_dirac_family(const BaseGrid& grid, int sites,
                                          const std::function<Cplx(double)>& mass);

// Eigenvalues live in the rationals for exact scalars and in doubles
// otherwise; thresholds and window bounds use the same type.
template <class S>
using RealOf = std::conditional_t<ScalarOps<S>::exact, Rat, double>;

template <class S>
inline Cplx to_cplx(const S& v) {
  if constexpr (std::is_same_v<S, Cplx>)
    return v;
  else if constexpr (std::is_same_v<S, GaussRat>)
    return Cplx{v.re.get_d(), v.im.get_d()};
  else
    return Cplx{v.get_d(), 0.0};
}

inline double real_mag(const Rat& v) { return std::abs(v.get_d()); }
inline double real_mag(double v) { return std::abs(v); }

inline Eigen::MatrixXcd to_eigen(const Mat<Cplx>& m) {
  Eigen::MatrixXcd e(m.rows, m.cols);
  for (int i = 0; i < m.rows; i++)
    for (int j = 0; j < m.cols; j++) e(i, j) = m.at(i, j);
  return e;
}

inline Mat<Cplx> from_eigen(const Eigen::MatrixXcd& e) {
  Mat<Cplx> m(int(e.rows()), int(e.cols()));
  for (int i = 0; i < m.rows; i++)
    for (int j = 0; j < m.cols; j++) m.at(i, j) = e(i, j);
  return m;
}

// hermitian eigendecomposition, ascending; numeric frames come back
// orthonormal, exact frames stay unnormalized rational eigenbases
template <class S>
struct Spectrum {
  std::vector<RealOf<S>> evals;
  Mat<S> vecs;
};

template <class S>
Spectrum<S> hermitian_spectrum(const Mat<S>& h) {
  if constexpr (ScalarOps<S>::exact) {
    ExactEigen<S> ee = eigen_exact_hermitian(h);
    return {std::move(ee.evals), std::move(ee.vecs)};
  } else {
    static_assert(std::is_same_v<S, Cplx>, "numeric spectra are computed over complex doubles");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(to_eigen(h));
    if (es.info() != Eigen::Success) throw InvalidInput("hermitian eigendecomposition failed");
    Spectrum<S> sp;
    sp.evals.assign(es.eigenvalues().data(), es.eigenvalues().data() + h.rows);
    sp.vecs = from_eigen(es.eigenvectors());
    return sp;
  }
}

template <class S>
Mat<S> pseudo_inverse(const Mat<S>& m, double rtol = 1e-10) {
  if constexpr (ScalarOps<S>::exact) {
    (void)rtol;
    return pinv_exact(m);
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(to_eigen(m),
                                           Eigen::ComputeThinU | Eigen::ComputeThinV);
    double thr = rtol * (svd.singularValues().size() ? svd.singularValues()(0) : 0.0);
    Eigen::VectorXd inv = svd.singularValues();
    for (int i = 0; i < inv.size(); i++) inv(i) = (inv(i) > thr) ? 1.0 / inv(i) : 0.0;
    return from_eigen(svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint());
  }
}

namespace detail {

// numeric guard band around a window boundary; exact windows use none
inline double window_margin(double bound) { return std::max(1e-6 * std::abs(bound), 1e-9); }

template <class S>
bool near_boundary(const RealOf<S>& e, const RealOf<S>& bound) {
  if constexpr (ScalarOps<S>::exact)
    return e == bound;
  else
    return std::abs(e - bound) <= window_margin(bound);
}

template <class S>
bool strictly_inside(const RealOf<S>& e, const RealOf<S>& lo, const RealOf<S>& hi) {
  return lo < e && e < hi;
}

// columns of the spectrum whose eigenvalue falls inside the window; the
// eigenvalues are ascending, so the selection is a contiguous range
template <class S>
std::pair<int, int> window_range(const Spectrum<S>& sp, const RealOf<S>& lo, const RealOf<S>& hi) {
  int a = 0, b = int(sp.evals.size());
  while (a < b && !(lo < sp.evals[a])) a++;
  int c = a;
  while (c < b && sp.evals[c] < hi) c++;
  return {a, c};
}

template <class S>
Mat<S> gram_inverse(const Mat<S>& f, double eps = 1e-12) {
  return inverse(Mat<S>(f.conj_transpose() * f), eps);
}

// orthogonal projection onto the span of the frame columns
template <class S>
Mat<S> frame_projector(const Mat<S>& f, double eps = 1e-12) {
  if (f.cols == 0) return Mat<S>::zero(f.rows, f.rows);
  return f * gram_inverse(f, eps) * f.conj_transpose();
}

Mat<Cplx> orthonormalize(Mat<Cplx> f, double drop_tol = 1e-8);

}  // namespace detail

// One maximal run of adjacent samples on which the window has constant rank
// on both sides, with a frame of the window eigenspace per sample. Numeric
// frames are transported along the run by projecting the previous frame onto
// the next eigenspace; exact frames are the raw per-sample eigenbases.
template <class S>
struct ChartComponent {
  std::vector<int> samples;
  int rank_plus = 0, rank_minus = 0;
  std::vector<Mat<S>> fplus, fminus;
  double projector_residual = 0;
};

template <class S>
struct CutoffChart {
  RealOf<S> lo{}, hi{};
  std::vector<char> member;
  std::vector<int> component_of, pos_in;
  std::vector<ChartComponent<S>> components;

  bool is_member(int i) const { return member[i] != 0; }
  const ChartComponent<S>& comp(int i) const {
    if (!is_member(i)) throw InvalidInput("sample lies outside the chart");
    return components[component_of[i]];
  }
  const Mat<S>& frame_plus(int i) const { return comp(i).fplus[pos_in[i]]; }
  const Mat<S>& frame_minus(int i) const { return comp(i).fminus[pos_in[i]]; }
  int rank_plus(int i) const { return comp(i).rank_plus; }
  int rank_minus(int i) const { return comp(i).rank_minus; }
};

// Spectral window (lo, hi) applied to the squared singular values of the
// family. A sample belongs to the chart when neither side has an eigenvalue
// on a window boundary (within the numeric guard band); components split
// wherever the window rank jumps.
template <class S>
CutoffChart<S> window_cutoff(const OperatorFamily<S>& fam, RealOf<S> lo, RealOf<S> hi) {
  int ns = fam.grid.size();
  if (ns == 0) throw InvalidInput("family has no samples");
  if (!(lo < hi)) throw InvalidInput("window bounds must be ordered");

  CutoffChart<S> ch;
  ch.lo = lo;
  ch.hi = hi;
  ch.member.assign(ns, 0);
  ch.component_of.assign(ns, -1);
  ch.pos_in.assign(ns, -1);

  std::vector<Spectrum<S>> sp(ns), sm(ns);
  std::vector<int> rp(ns, 0), rm(ns, 0);
  for (int i = 0; i < ns; i++) {
    const Mat<S>& t = fam.dplus[i];
    sp[i] = hermitian_spectrum(Mat<S>(t.conj_transpose() * t));
    sm[i] = hermitian_spectrum(Mat<S>(t * t.conj_transpose()));
    bool ok = true;
    for (const auto& e : sp[i].evals)
      if (detail::near_boundary<S>(e, lo) || detail::near_boundary<S>(e, hi)) ok = false;
    for (const auto& e : sm[i].evals)
      if (detail::near_boundary<S>(e, lo) || detail::near_boundary<S>(e, hi)) ok = false;
    ch.member[i] = ok ? 1 : 0;
    if (!ok) continue;
    for (const auto& e : sp[i].evals)
      if (detail::strictly_inside<S>(e, lo, hi)) rp[i]++;
    for (const auto& e : sm[i].evals)
      if (detail::strictly_inside<S>(e, lo, hi)) rm[i]++;
  }

  auto prev = [&](int i) {
    if (fam.grid.closed()) return (i + ns - 1) % ns;
    return i - 1;
  };
  auto run_breaks = [&](int i) {
    int p = prev(i);
    return p < 0 || !ch.member[p] || rp[p] != rp[i] || rm[p] != rm[i];
  };

  std::vector<int> starts;
  for (int i = 0; i < ns; i++)
    if (ch.member[i] && run_breaks(i)) starts.push_back(i);
  bool any_member = std::any_of(ch.member.begin(), ch.member.end(), [](char c) { return c; });
  if (starts.empty() && any_member) starts.push_back(0);  // the run closes over the whole loop

  auto window_frame = [&](const Spectrum<S>& s) {
    auto [a, b] = detail::window_range(s, lo, hi);
    return s.vecs.cols_range(a, b);
  };

  for (int s0 : starts) {
    ChartComponent<S> comp;
    comp.rank_plus = rp[s0];
    comp.rank_minus = rm[s0];
    int j = s0;
    while (j >= 0 && ch.member[j] && rp[j] == comp.rank_plus && rm[j] == comp.rank_minus &&
           ch.component_of[j] < 0) {
      ch.component_of[j] = int(ch.components.size());
      ch.pos_in[j] = int(comp.samples.size());
      comp.samples.push_back(j);
      Mat<S> wp = window_frame(sp[j]);
      Mat<S> wm = window_frame(sm[j]);
      if constexpr (!ScalarOps<S>::exact) {
        if (!comp.fplus.empty()) {
          wp = detail::orthonormalize(Mat<S>(wp * (wp.conj_transpose() * comp.fplus.back())));
          wm = detail::orthonormalize(Mat<S>(wm * (wm.conj_transpose() * comp.fminus.back())));
        }
        auto presid = [&](const Mat<S>& f) {
          Mat<S> p = detail::frame_projector(f);
          return Mat<S>(p * p - p).max_mag();
        };
        comp.projector_residual =
            std::max({comp.projector_residual, presid(wp), presid(wm)});
      }
      comp.fplus.push_back(std::move(wp));
      comp.fminus.push_back(std::move(wm));
      j = fam.grid.next(j);
    }
    ch.components.push_back(std::move(comp));
  }
  return ch;
}

// Pairing of a window against the window of the transposed family: the dual
// spectra must mirror the primal ones side for side, and the bilinear pairing
// of the dual-plus frame against the primal-minus frame must be nondegenerate.
struct DualPairingReport {
  int samples_checked = 0;
  double max_spectrum_gap = 0;
  double min_rel_det = std::numeric_limits<double>::infinity();
};

template <class S>
DualPairingReport dual_cutoff(const OperatorFamily<S>& fam, RealOf<S> lo, RealOf<S> hi,
                              double eps = 1e-12) {
  OperatorFamily<S> dual;
  dual.grid = fam.grid;
  for (const auto& m : fam.dplus) dual.dplus.push_back(m.transpose());

  CutoffChart<S> primal = window_cutoff(fam, lo, hi);
  CutoffChart<S> dualc = window_cutoff(dual, lo, hi);

  DualPairingReport rep;
  for (int i = 0; i < fam.grid.size(); i++) {
    if (!primal.is_member(i) || !dualc.is_member(i)) continue;
    const Mat<S>& t = fam.dplus[i];
    const Mat<S>& td = dual.dplus[i];
    auto gap_between = [&](const Mat<S>& a, const Mat<S>& b) {
      Spectrum<S> x = hermitian_spectrum(a), y = hermitian_spectrum(b);
      double g = 0;
      for (size_t k = 0; k < x.evals.size(); k++)
        g = std::max(g, real_mag(RealOf<S>(x.evals[k] - y.evals[k])));
      return g;
    };
    rep.max_spectrum_gap = std::max(
        rep.max_spectrum_gap,
        gap_between(Mat<S>(td.conj_transpose() * td), Mat<S>(t * t.conj_transpose())));
    rep.max_spectrum_gap = std::max(
        rep.max_spectrum_gap,
        gap_between(Mat<S>(td * td.conj_transpose()), Mat<S>(t.conj_transpose() * t)));

    const Mat<S>& gd = dualc.frame_plus(i);
    const Mat<S>& fm = primal.frame_minus(i);
    if (gd.cols != fm.cols) throw std::logic_error("dual window ranks disagree with the primal");
    if (gd.cols == 0) {
      rep.samples_checked++;
      continue;
    }
    Mat<S> pair = gd.transpose() * fm;
    double dnum = ScalarOps<S>::mag(det(pair, eps));
    double scale = std::sqrt(ScalarOps<S>::mag(det(Mat<S>(gd.conj_transpose() * gd), eps)) *
                             ScalarOps<S>::mag(det(Mat<S>(fm.conj_transpose() * fm), eps)));
    rep.min_rel_det = std::min(rep.min_rel_det, dnum / scale);
    rep.samples_checked++;
  }
  if (rep.samples_checked == 0) throw InvalidInput("no sample lies in both windows");
  return rep;
}

// Transition between the frame trivializations of two nested windows at one
// sample: the determinant of the band map in its Gram weighting, times the
// frame-change determinants, with the sign that shuffles the band factors
// past the retained ones.
template <class S>
S transition_value(const Mat<S>& t, const Mat<S>& flp, const Mat<S>& flm, const Mat<S>& fbp,
                   const Mat<S>& fbm, const Mat<S>& fmp, const Mat<S>& fmm, double eps = 1e-12) {
  if (fbp.cols != fbm.cols) throw std::logic_error("band ranks disagree between the sides");
  int b = fbp.cols, ml = flm.cols;
  Mat<S> mband;
  if (b > 0)
    mband = detail::gram_inverse(fbm, eps) * fbm.conj_transpose() * t * fbp *
            detail::gram_inverse(fbp, eps);
  Mat<S> up = detail::gram_inverse(fmp, eps) * fmp.conj_transpose() * Mat<S>::hcat(flp, fbp);
  Mat<S> um = detail::gram_inverse(fmm, eps) * fmm.conj_transpose() * Mat<S>::hcat(flm, fbm);
  S val = det(mband, eps) * det(um, eps) * ScalarOps<S>::conj(det(up, eps));
  if ((b * ml + b * (b - 1) / 2) % 2) val = -val;
  return val;
}

// value of the determinant section in the frame trivialization of one window
template <class S>
S section_value(const Mat<S>& t, const Mat<S>& fp, const Mat<S>& fm, double eps = 1e-12) {
  if (fp.cols != fm.cols)
    throw InvalidInput("determinant section needs equal window ranks on the two sides");
  int m = fp.cols;
  Mat<S> w;
  if (m > 0)
    w = detail::gram_inverse(fm, eps) * fm.conj_transpose() * t * fp *
        detail::gram_inverse(fp, eps);
  S val = det(w, eps);
  if ((m * (m - 1) / 2) % 2) val = -val;
  return val;
}

template <class S>
struct TransitionEntry {
  int chart_lo = 0, chart_hi = 0;
  int sample = 0;
  int band_rank = 0;
  S g{};
};

template <class S>
struct DetLineBundle {
  std::vector<RealOf<S>> thresholds;
  std::vector<CutoffChart<S>> charts;
  std::map<std::pair<int, int>, CutoffChart<S>> bands;
  std::vector<TransitionEntry<S>> transitions;
  double max_projector_gap = 0;
  double max_cocycle_residual = 0;
  int cocycle_triples = 0;

  const TransitionEntry<S>* transition(int a, int b, int sample) const {
    auto it = tindex.find({a, b, sample});
    return it == tindex.end() ? nullptr : &transitions[it->second];
  }

  std::map<std::tuple<int, int, int>, int> tindex;
};

// The finite determinant line bundle of the family over a ladder of
// thresholds: charts below each threshold, band windows between pairs, and
// the transition value at every overlap sample. The charts must cover the
// grid, ranks must add up window by window, and the transitions must satisfy
// the cocycle identity on every triple overlap.
template <class S>
DetLineBundle<S> det_line_bundle(const OperatorFamily<S>& fam, std::vector<RealOf<S>> thresholds,
                                 double tol = 1e-9, double eps = 1e-12) {
  if (thresholds.empty()) throw InvalidInput("at least one threshold is required");
  for (size_t k = 0; k + 1 < thresholds.size(); k++)
    if (!(thresholds[k] < thresholds[k + 1]))
      throw InvalidInput("thresholds must be ascending and distinct");
  if (!(RealOf<S>(0) < thresholds[0])) throw InvalidInput("thresholds must be positive");

  DetLineBundle<S> bundle;
  bundle.thresholds = thresholds;
  int nt = int(thresholds.size());
  for (int k = 0; k < nt; k++)
    bundle.charts.push_back(window_cutoff(fam, RealOf<S>(-1), thresholds[k]));

  for (int i = 0; i < fam.grid.size(); i++) {
    bool covered = false;
    for (const auto& c : bundle.charts) covered = covered || c.is_member(i);
    if (!covered) throw InvalidInput("thresholds leave part of the base uncovered");
  }

  for (int a = 0; a < nt; a++)
    for (int b = a + 1; b < nt; b++) {
      CutoffChart<S> band = window_cutoff(fam, thresholds[a], thresholds[b]);
      const CutoffChart<S>&cl = bundle.charts[a], &ch = bundle.charts[b];
      for (int i = 0; i < fam.grid.size(); i++) {
        if (!cl.is_member(i) || !ch.is_member(i)) continue;
        if (!band.is_member(i))
          throw std::logic_error("overlap sample fell out of the band window");
        if (ch.rank_plus(i) != cl.rank_plus(i) + band.rank_plus(i) ||
            ch.rank_minus(i) != cl.rank_minus(i) + band.rank_minus(i))
          throw std::logic_error("window ranks do not add up across the band");
        auto gap = [&](const Mat<S>& fl, const Mat<S>& fb, const Mat<S>& fh) {
          return Mat<S>(detail::frame_projector(fh, eps) - detail::frame_projector(fl, eps) -
                        detail::frame_projector(fb, eps))
              .max_mag();
        };
        bundle.max_projector_gap = std::max(
            {bundle.max_projector_gap,
             gap(cl.frame_plus(i), band.frame_plus(i), ch.frame_plus(i)),
             gap(cl.frame_minus(i), band.frame_minus(i), ch.frame_minus(i))});
        TransitionEntry<S> te;
        te.chart_lo = a;
        te.chart_hi = b;
        te.sample = i;
        te.band_rank = band.rank_plus(i);
        te.g = transition_value(fam.dplus[i], cl.frame_plus(i), cl.frame_minus(i),
                                band.frame_plus(i), band.frame_minus(i), ch.frame_plus(i),
                                ch.frame_minus(i), eps);
        bundle.tindex[{a, b, i}] = int(bundle.transitions.size());
        bundle.transitions.push_back(std::move(te));
      }
      bundle.bands.emplace(std::make_pair(a, b), std::move(band));
    }

  for (int a = 0; a < nt; a++)
    for (int b = a + 1; b < nt; b++)
      for (int c = b + 1; c < nt; c++)
        for (int i = 0; i < fam.grid.size(); i++) {
          const TransitionEntry<S>* gab = bundle.transition(a, b, i);
          const TransitionEntry<S>* gbc = bundle.transition(b, c, i);
          const TransitionEntry<S>* gac = bundle.transition(a, c, i);
          if (!gab || !gbc || !gac) continue;
          double r = ScalarOps<S>::mag(S(gac->g - gab->g * gbc->g));
          bundle.max_cocycle_residual = std::max(bundle.max_cocycle_residual, r);
          bundle.cocycle_triples++;
        }
  if (bundle.max_cocycle_residual > tol)
    throw InvalidInput("transition cocycle identity fails on a triple overlap");
  return bundle;
}

template <class S>
struct SectionReport {
  std::vector<std::vector<S>> value;  // [chart][sample], zero outside the chart
  std::vector<double> sigma_min;
  std::vector<int> zeros;
  double max_equivariance_residual = 0;
  bool winding_defined = false;
  int winding = 0;
};

// The determinant section in every chart trivialization, its zero set, the
// equivariance defect against the transitions, and (on closed loops without
// zeros) the winding number of the full-space determinant.
template <class S>
SectionReport<S> det_section(const OperatorFamily<S>& fam, const DetLineBundle<S>& bundle,
                             double zero_tol = 1e-8, double eps = 1e-12) {
  if (fam.rows() != fam.cols())
    throw InvalidInput("determinant section needs a family of index zero");
  int ns = fam.grid.size();
  SectionReport<S> rep;
  rep.sigma_min.resize(ns, 0);
  for (int i = 0; i < ns; i++) {
    const Mat<S>& t = fam.dplus[i];
    if constexpr (ScalarOps<S>::exact) {
      Spectrum<S> s = hermitian_spectrum(Mat<S>(t.conj_transpose() * t));
      double low = s.evals.empty() ? 0.0 : std::max(0.0, s.evals.front().get_d());
      rep.sigma_min[i] = std::sqrt(low);
    } else {
      // singular values straight from the matrix; squaring first would cost
      // half the precision near a zero
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(to_eigen(t));
      rep.sigma_min[i] = svd.singularValues().size() ? svd.singularValues().minCoeff() : 0.0;
    }
    if (rep.sigma_min[i] <= zero_tol) rep.zeros.push_back(i);
  }

  rep.value.assign(bundle.charts.size(), std::vector<S>(ns, ScalarOps<S>::zero()));
  for (size_t k = 0; k < bundle.charts.size(); k++) {
    const CutoffChart<S>& ch = bundle.charts[k];
    for (int i = 0; i < ns; i++)
      if (ch.is_member(i))
        rep.value[k][i] = section_value(fam.dplus[i], ch.frame_plus(i), ch.frame_minus(i), eps);
  }

  for (const auto& te : bundle.transitions) {
    S lhs = rep.value[te.chart_hi][te.sample];
    S rhs = te.g * rep.value[te.chart_lo][te.sample];
    rep.max_equivariance_residual =
        std::max(rep.max_equivariance_residual, ScalarOps<S>::mag(S(lhs - rhs)));
  }

  if (fam.grid.closed() && rep.zeros.empty()) {
    double total = 0;
    std::vector<Cplx> dets(ns);
    for (int i = 0; i < ns; i++) dets[i] = to_cplx(det(fam.dplus[i], eps));
    for (auto [i, j] : fam.grid.edges()) total += std::arg(dets[j] / dets[i]);
    rep.winding = int(std::lround(total / (2 * std::acos(-1.0))));
    rep.winding_defined = true;
  }
  return rep;
}

// Net signed count of eigenvalue-path crossings of the negative real ray
// along the loop, matching eigenvalues greedily between neighbouring
// samples. Counted clockwise-negative, so it agrees with the winding of the
// determinant when every path stays away from the origin and meets the ray
// transversally.
int spectral_flow(const OperatorFamily<Cplx>& fam);

// Finite observable model of one family member over one window: the ambient
// complex of the full skew extension, with the Sym retraction onto the
// window block. The retained x frame keeps the raw columns (conjugated on
// the plus side) while the xi frame carries the inverse Gram, so the induced
// pairing is standard and the retained differential is exactly the skew
// extension of the Gram-weighted window map.
template <class S>
struct ChartModel {
  GenSpec amb;
  SkewForm<S> a_amb;
  SymRetraction<S> sym;
  SkewForm<S> a_small;
  Mat<S> window_map;
  int rank_plus = 0, rank_minus = 0;
  bool has_section = false;
  S section{};
  SecondOrderOp<S> delta_amb;
  Element<S> exp_small;

  // one-sided perturbed projection of the window retraction by the ambient
  // odd laplacian
  Element<S> pi_hat(const Element<S>& f, int max_iter = 256) const {
    return perturbed_pi([&](const Element<S>& g) { return sym.pi(g); },
                        [&](const Element<S>& g) { return sym.eta(g); },
                        [&](const Element<S>& g) { return delta_amb.apply(g); }, f, max_iter);
  }

  // the chart realization of the observable map: project, then pair against
  // the exponential of the retained form and read the top coefficient
  S phi(const Element<S>& f, int max_iter = 256) const {
    return S((exp_small * pi_hat(f, max_iter)).top_x_coeff());
  }
  S phi_one() const { return exp_small.top_x_coeff(); }
};

template <class S>
ChartModel<S> chart_model(const Mat<S>& t, const Mat<S>& fp, const Mat<S>& fm,
                          const Mat<S>& fp_rest, const Mat<S>& fm_rest, int truncation,
                          double tol = 0, double eps = 1e-12) {
  int p = t.cols, q = t.rows;
  int mp = fp.cols, mq = fm.cols, h = mp + mq;
  if (fp.rows != p || fm.rows != q || fp_rest.rows != p || fm_rest.rows != q ||
      mp + fp_rest.cols != p || mq + fm_rest.cols != q)
    throw InvalidInput("window and complement frames do not fill the two sides");

  ChartModel<S> mdl;
  mdl.amb = GenSpec{p + q, p + q};
  mdl.a_amb = skew_extension(t);
  mdl.rank_plus = mp;
  mdl.rank_minus = mq;

  Mat<S> gp, gm;
  if (mp) gp = detail::gram_inverse(fp, eps);
  if (mq) gm = detail::gram_inverse(fm, eps);
  Mat<S> fpc = fp.conj(), gpc = gp.conj();
  Mat<S> kp = mp ? Mat<S>(fp * gp) : Mat<S>(p, 0);
  Mat<S> km = mq ? Mat<S>(fm * gm).conj() : Mat<S>(q, 0);

  Mat<S> hx(p + q, h), k(p + q, h), pi0(h, p + q), pi1(h, p + q);
  for (int i = 0; i < p; i++)
    for (int a = 0; a < mp; a++) {
      hx.at(i, a) = fpc.at(i, a);
      k.at(i, a) = kp.at(i, a);
      pi1.at(a, i) = ScalarOps<S>::conj(fp.at(i, a));
    }
  Mat<S> pi0_top = mp ? Mat<S>(gpc * fp.transpose()) : Mat<S>(0, p);
  for (int a = 0; a < mp; a++)
    for (int i = 0; i < p; i++) pi0.at(a, i) = pi0_top.at(a, i);
  Mat<S> pi0_bot = mq ? Mat<S>(gm * fm.conj_transpose()) : Mat<S>(0, q);
  for (int j = 0; j < q; j++)
    for (int a = 0; a < mq; a++) {
      hx.at(p + j, mp + a) = fm.at(j, a);
      k.at(p + j, mp + a) = km.at(j, a);
      pi0.at(mp + a, p + j) = pi0_bot.at(a, j);
      pi1.at(mp + a, p + j) = fm.at(j, a);
    }

  Mat<S> c(p + q, fp_rest.cols + fm_rest.cols);
  for (int i = 0; i < p; i++)
    for (int a = 0; a < fp_rest.cols; a++) c.at(i, a) = fp_rest.at(i, a);
  for (int j = 0; j < q; j++)
    for (int a = 0; a < fm_rest.cols; a++)
      c.at(p + j, fp_rest.cols + a) = ScalarOps<S>::conj(fm_rest.at(j, a));

  Mat<S> tp = pseudo_inverse(t);
  Mat<S> pinv_amb(p + q, p + q);
  for (int i = 0; i < p; i++)
    for (int j = 0; j < q; j++) {
      pinv_amb.at(i, p + j) = -tp.at(i, j);
      pinv_amb.at(p + j, i) = tp.at(i, j);
    }
  Mat<S> eta_lin = -(pinv_amb * (Mat<S>::identity(p + q) - hx * pi0));

  mdl.sym = make_sym_retraction(truncation, mdl.a_amb.a, hx, k, pi0, pi1, eta_lin, tol, eps, &c);
  mdl.window_map = (mp && mq) ? Mat<S>(gm * fm.conj_transpose() * t * fp * gp) : Mat<S>(mq, mp);
  mdl.a_small = SkewForm<S>(mdl.sym.small_form, tol);
  mdl.exp_small = exp_nilpotent(mdl.a_small.as_element(mdl.sym.small_sp));
  mdl.delta_amb = odd_laplacian<S>(mdl.amb);
  if (mp == mq) {
    mdl.has_section = true;
    mdl.section = det(mdl.window_map, eps);
    if ((mp * (mp - 1) / 2) % 2) mdl.section = -mdl.section;
  }
  return mdl;
}

// chart model at one sample of a cutoff chart, with the complement frames
// taken from the raw spectrum at that sample
template <class S>
ChartModel<S> chart_model_at(const OperatorFamily<S>& fam, const CutoffChart<S>& chart, int sample,
                             int truncation, double tol = 0, double eps = 1e-12) {
  const Mat<S>& t = fam.dplus[sample];
  Spectrum<S> sp = hermitian_spectrum(Mat<S>(t.conj_transpose() * t));
  Spectrum<S> sm = hermitian_spectrum(Mat<S>(t * t.conj_transpose()));
  auto rest = [&](const Spectrum<S>& s) {
    auto [a, b] = detail::window_range(s, chart.lo, chart.hi);
    return Mat<S>::hcat(s.vecs.cols_range(0, a), s.vecs.cols_range(b, int(s.evals.size())));
  };
  return chart_model(t, chart.frame_plus(sample), chart.frame_minus(sample), rest(sp), rest(sm),
                     truncation, tol, eps);
}

// embedding of the retained algebra of a smaller window into that of a
// larger one, on generators the composite of inclusion and projection
template <class S>
Substitution<S> embed_window(const ChartModel<S>& low, const ChartModel<S>& high) {
  Mat<S> jx = high.sym.pi0 * low.sym.Hx;
  Mat<S> jxi = high.sym.pi1 * low.sym.K;
  int hl = low.sym.small_sp.n, hh = high.sym.small_sp.n;
  Substitution<S> emb(low.sym.small_sp, high.sym.small_sp);
  for (int a = 0; a < hl; a++)
    for (int i = 0; i < hh; i++) {
      if (!ScalarOps<S>::is_zero(jx.at(i, a)))
        emb.fx[a] += jx.at(i, a) * Element<S>::gen_x(high.sym.small_sp, i);
      if (!ScalarOps<S>::is_zero(jxi.at(i, a)))
        emb.fxi[a] += jxi.at(i, a) * Element<S>::gen_xi(high.sym.small_sp, i);
    }
  return emb;
}

// the band form of the larger window, written on its retained generators
template <class S>
Element<S> embedded_band_form(const ChartModel<S>& high, const Mat<S>& fbp, const Mat<S>& fbm,
                              const Mat<S>& t, double tol = 0, double eps = 1e-12) {
  int b = fbp.cols;
  if (b != fbm.cols) throw std::logic_error("band ranks disagree between the sides");
  int p = t.cols, q = t.rows;
  Mat<S> mband(0, 0);
  if (b)
    mband = detail::gram_inverse(fbm, eps) * fbm.conj_transpose() * t * fbp *
            detail::gram_inverse(fbp, eps);
  Mat<S> hxb(p + q, 2 * b);
  Mat<S> fbpc = fbp.conj();
  for (int i = 0; i < p; i++)
    for (int a = 0; a < b; a++) hxb.at(i, a) = fbpc.at(i, a);
  for (int j = 0; j < q; j++)
    for (int a = 0; a < b; a++) hxb.at(p + j, b + a) = fbm.at(j, a);
  Mat<S> jxb = high.sym.pi0 * hxb;
  Mat<S> bmat = jxb * skew_extension(mband).a * jxb.transpose();
  return SkewForm<S>(bmat, tol).as_element(high.sym.small_sp);
}

struct TransitionCheck {
  double embed_residual = 0;  // the band-extended embedding square
  double top_residual = 0;    // top rows compared through the transition value
  double tower_residual = 0;  // perturbed projections composed through the tower
  double full_residual = 0;   // the full identity on ambient words
  int words = 0;
};

// The commutation checks behind the transition identity, on the truncated
// monomial bases capped per stratum: the embedding intertwines the window
// exponentials across the band, the top rows match through g, the perturbed
// projection factors through the tower, and the full composite identity
// holds on ambient words.
template <class S>
TransitionCheck verify_transition_identity(const ChartModel<S>& low, const ChartModel<S>& high,
                                           const Mat<S>& fbp, const Mat<S>& fbm, const Mat<S>& t,
                                           const S& g, int cap = 48, double tol = 0,
                                           double eps = 1e-12) {
  (void)eps;
  if (low.sym.N != high.sym.N) throw InvalidInput("window models disagree on the truncation");
  if (!(low.amb == high.amb)) throw InvalidInput("window models live over different families");
  int n = low.sym.N;
  TransitionCheck out;

  Substitution<S> emb = embed_window(low, high);
  Element<S> exp_b = exp_nilpotent(embedded_band_form(high, fbp, fbm, t, tol));

  StratifiedBasis<S> lb(low.sym.small_sp, n);
  int used = 0;
  for (int j = 0; j <= n && used < cap; j++)
    for (int i = 0; i < lb.dim(j) && used < cap; i++, used++) {
      Element<S> w = Element<S>::monomial(low.sym.small_sp, lb.strata[j][i], ScalarOps<S>::one());
      Element<S> ew = emb.apply(w);
      Element<S> lhs = exp_b * emb.apply(Element<S>(low.exp_small * w));
      Element<S> rhs = high.exp_small * ew;
      out.embed_residual = std::max(out.embed_residual, Element<S>(lhs - rhs).max_mag());
      S d1 = S(g * w.top_x_coeff() - Element<S>(exp_b * ew).top_x_coeff());
      S d1c = S(g * Element<S>(low.exp_small * w).top_x_coeff() - rhs.top_x_coeff());
      out.top_residual =
          std::max({out.top_residual, ScalarOps<S>::mag(d1), ScalarOps<S>::mag(d1c)});
    }

  SecondOrderOp<S> delta_high = odd_laplacian<S>(high.sym.small_sp);
  auto pi_t = [&](const Element<S>& v) { return low.sym.pi(high.sym.iota(v)); };
  auto eta_t = [&](const Element<S>& v) { return high.sym.pi(low.sym.eta(high.sym.iota(v))); };
  auto pi_hat_t = [&](const Element<S>& v) {
    return perturbed_pi(pi_t, eta_t, [&](const Element<S>& u) { return delta_high.apply(u); }, v);
  };

  StratifiedBasis<S> ab(low.sym.big_sp, n);
  used = 0;
  for (int j = 0; j <= n && used < cap; j++)
    for (int i = 0; i < ab.dim(j) && used < cap; i++, used++) {
      Element<S> w = Element<S>::monomial(low.sym.big_sp, ab.strata[j][i], ScalarOps<S>::one());
      Element<S> ph_low = low.pi_hat(w);
      Element<S> ph_high = high.pi_hat(w);
      out.tower_residual =
          std::max(out.tower_residual, Element<S>(ph_low - pi_hat_t(ph_high)).max_mag());
      S v_low = g * Element<S>(low.exp_small * ph_low).top_x_coeff();
      S v_high = Element<S>(high.exp_small * ph_high).top_x_coeff();
      out.full_residual = std::max(out.full_residual, ScalarOps<S>::mag(S(v_low - v_high)));
      out.words++;
    }
  return out;
}

}  // namespace bvdet
