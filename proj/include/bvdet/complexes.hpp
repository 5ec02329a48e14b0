#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bvdet/matrix.hpp"

namespace bvdet {

// Finite cochain complex stored degreewise-dense; degrees outside the
// recorded support are zero. d[k] maps degree k to degree k+1 and has shape
// dim(k+1) x dim(k).
template <class S>
struct CochainComplex {
  std::map<int, int> dims;
  std::map<int, Mat<S>> d;

  int dim(int k) const {
    auto it = dims.find(k);
    return it == dims.end() ? 0 : it->second;
  }
  int min_degree() const { return dims.empty() ? 0 : dims.begin()->first; }
  int max_degree() const { return dims.empty() ? 0 : dims.rbegin()->first; }

  void set_dim(int k, int n) {
    if (n > 0) dims[k] = n;
  }
  void set_diff(int k, Mat<S> m) {
    if (m.rows != dim(k + 1) || m.cols != dim(k))
      throw InvalidInput("differential block has wrong shape");
    if (m.rows > 0 && m.cols > 0) d[k] = std::move(m);
  }
  Mat<S> diff(int k) const {
    auto it = d.find(k);
    if (it != d.end()) return it->second;
    return Mat<S>(dim(k + 1), dim(k));
  }

  // largest residual of d(k+1) d(k) over the support
  double square_residual() const {
    double worst = 0;
    for (int k = min_degree() - 1; k <= max_degree(); k++) {
      if (dim(k) == 0 || dim(k + 2) == 0) continue;
      worst = std::max(worst, Mat<S>(diff(k + 1) * diff(k)).max_mag());
    }
    return worst;
  }
  void validate(double tol = 0) const {
    for (auto& [k, m] : d)
      if (m.rows != dim(k + 1) || m.cols != dim(k))
        throw InvalidInput("differential block has wrong shape");
    if (square_residual() > tol) throw InvalidInput("differential does not square to zero");
  }

  bool same_shape(const CochainComplex& o, double tol = 0) const {
    for (int k = std::min(min_degree(), o.min_degree());
         k <= std::max(max_degree(), o.max_degree()); k++) {
      if (dim(k) != o.dim(k)) return false;
      if (dim(k) && Mat<S>(diff(k) - o.diff(k)).max_mag() > tol) return false;
    }
    return true;
  }
};

template <class S>
std::map<int, int> cohomology_dims(const CochainComplex<S>& C, double tol = 0, double eps = 1e-9) {
  C.validate(tol);
  std::map<int, int> h;
  for (auto& [k, n] : C.dims) {
    int rk_out = C.dim(k + 1) ? rank(C.diff(k), eps) : 0;
    int rk_in = C.dim(k - 1) ? rank(C.diff(k - 1), eps) : 0;
    int hk = n - rk_out - rk_in;
    if (hk != 0) h[k] = hk;
  }
  return h;
}

// Degreewise family of matrices with a fixed degree shift:
// block k maps source degree k to target degree k + shift.
template <class S>
struct GradedMap {
  int shift = 0;
  std::map<int, Mat<S>> blocks;

  explicit GradedMap(int sh = 0) : shift(sh) {}

  void set_block(int k, Mat<S> m) {
    if (m.rows > 0 && m.cols > 0 && !m.is_zero()) blocks[k] = std::move(m);
  }
  // stored block, or a zero matrix of the shape the caller prescribes
  Mat<S> block(int k, int rows, int cols) const {
    auto it = blocks.find(k);
    if (it == blocks.end()) return Mat<S>(rows, cols);
    if (it->second.rows != rows || it->second.cols != cols)
      throw InvalidInput("graded map block has wrong shape");
    return it->second;
  }
};

struct AxiomCheck {
  std::string name;
  int degree = 0;
  bool pass = false;
  double residual = 0;
};

struct AxiomReport {
  std::vector<AxiomCheck> checks;
  std::vector<AxiomCheck> boundary_info;  // exempted truncation strata, informational

  bool ok() const {
    for (auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  double max_residual() const {
    double m = 0;
    for (auto& c : checks) m = std::max(m, c.residual);
    return m;
  }
};

// Deformation retraction data (iota, pi, eta) between a small complex W and
// a big complex V, with the homotopy normalized by d eta + eta d = iota pi - id.
// Degrees listed in exempt_degrees are truncation boundaries: the homotopy
// identity is not asserted there, only measured.
template <class S>
struct Retraction {
  CochainComplex<S> small, big;
  GradedMap<S> iota{0};
  GradedMap<S> pi{0};
  GradedMap<S> eta{-1};
  std::set<int> exempt_degrees;
};

template <class S>
AxiomReport verify_retraction(const Retraction<S>& r, double tol = 0) {
  AxiomReport rep;
  auto push = [&](const char* name, int k, const Mat<S>& resid, bool exempt) {
    AxiomCheck c{name, k, resid.max_mag() <= tol, resid.max_mag()};
    if (exempt)
      rep.boundary_info.push_back(c);
    else
      rep.checks.push_back(c);
  };
  rep.checks.push_back({"d_small_squares_to_zero", 0, r.small.square_residual() <= tol,
                        r.small.square_residual()});
  rep.checks.push_back(
      {"d_big_squares_to_zero", 0, r.big.square_residual() <= tol, r.big.square_residual()});

  int lo = std::min(r.small.min_degree(), r.big.min_degree()) - 1;
  int hi = std::max(r.small.max_degree(), r.big.max_degree()) + 1;
  for (int k = lo; k <= hi; k++) {
    int wk = r.small.dim(k), wk1 = r.small.dim(k + 1);
    int vk = r.big.dim(k), vk1 = r.big.dim(k + 1), vkm = r.big.dim(k - 1);
    Mat<S> io = r.iota.block(k, vk, wk), io1 = r.iota.block(k + 1, vk1, wk1);
    Mat<S> pr = r.pi.block(k, wk, vk), pr1 = r.pi.block(k + 1, wk1, vk1);
    Mat<S> et = r.eta.block(k, vkm, vk), et1 = r.eta.block(k + 1, vk, vk1);

    if (wk) push("pi_iota_is_identity", k, pr * io - Mat<S>::identity(wk), false);
    if (wk || vk)
      push("iota_chain_map", k, r.big.diff(k) * io - io1 * r.small.diff(k), false);
    if (wk || vk)
      push("pi_chain_map", k, r.small.diff(k) * pr - pr1 * r.big.diff(k), false);
    if (vk)
      push("homotopy_identity", k,
           r.big.diff(k - 1) * et + et1 * r.big.diff(k) - (io * pr - Mat<S>::identity(vk)),
           r.exempt_degrees.count(k) > 0);
  }
  return rep;
}

// Degree +1 map on the big complex of a retraction.
template <class S>
struct Perturbation {
  GradedMap<S> delta{+1};
};

enum class InversePolicy { Auto, Dense, Series };

namespace detail {
// (1 - M)^-1, either by dense elimination or, when M is nilpotent, by the
// finite geometric series. Auto tries the series first and falls back.
template <class S>
Mat<S> one_minus_inverse(const Mat<S>& M, InversePolicy policy, double eps) {
  int n = M.rows;
  Mat<S> one = Mat<S>::identity(n);
  if (policy != InversePolicy::Dense) {
    Mat<S> acc = one, pw = M;
    double thr = ScalarOps<S>::exact ? 0.0 : eps * std::max(1.0, M.max_mag());
    for (int j = 1; j <= n; j++) {
      if (pw.is_zero(thr)) return acc;
      acc = acc + pw;
      pw = pw * M;
    }
    if (policy == InversePolicy::Series)
      throw InvalidInput("perturbation not small: series does not terminate");
  }
  try {
    return inverse(Mat<S>(one - M), eps);
  } catch (const InvalidInput&) {
    throw InvalidInput("perturbation not small");
  }
}
}  // namespace detail

// The perturbation lemma, implemented verbatim: with X = (1 - delta eta)^-1,
//   delta_W = pi X delta iota      iota' = iota + eta X delta iota
//   pi'     = pi + pi X delta eta  eta'  = eta + eta X delta eta
template <class S>
Retraction<S> perturb(const Retraction<S>& r, const Perturbation<S>& p,
                      InversePolicy policy = InversePolicy::Auto, double tol = 0,
                      double eps = 1e-12) {
  // perturbed big differential must square to zero
  {
    double worst = 0;
    for (int k = r.big.min_degree() - 1; k <= r.big.max_degree(); k++) {
      int vk = r.big.dim(k), vk1 = r.big.dim(k + 1), vk2 = r.big.dim(k + 2);
      if (!vk || !vk2) continue;
      Mat<S> dk = r.big.diff(k) + p.delta.block(k, vk1, vk);
      Mat<S> dk1 = r.big.diff(k + 1) + p.delta.block(k + 1, vk2, vk1);
      worst = std::max(worst, Mat<S>(dk1 * dk).max_mag());
    }
    if (worst > tol) throw InvalidInput("perturbed differential does not square to zero");
  }

  Retraction<S> out;
  out.exempt_degrees = r.exempt_degrees;
  out.big = r.big;
  out.small = r.small;
  out.iota = GradedMap<S>(0);
  out.pi = GradedMap<S>(0);
  out.eta = GradedMap<S>(-1);

  std::map<int, Mat<S>> X;
  for (int k = r.big.min_degree(); k <= r.big.max_degree(); k++) {
    int vk = r.big.dim(k), vkm = r.big.dim(k - 1);
    if (!vk) continue;
    Mat<S> M = p.delta.block(k - 1, vk, vkm) * r.eta.block(k, vkm, vk);
    X[k] = detail::one_minus_inverse(M, policy, eps);
  }
  auto Xat = [&](int k) {
    auto it = X.find(k);
    return it == X.end() ? Mat<S>::identity(r.big.dim(k)) : it->second;
  };

  for (int k = r.big.min_degree() - 1; k <= r.big.max_degree() + 1; k++) {
    int wk = r.small.dim(k), wk1 = r.small.dim(k + 1);
    int vk = r.big.dim(k), vk1 = r.big.dim(k + 1), vkm = r.big.dim(k - 1);
    Mat<S> io = r.iota.block(k, vk, wk);
    Mat<S> pr = r.pi.block(k, wk, vk);
    Mat<S> et = r.eta.block(k, vkm, vk);
    Mat<S> dl = p.delta.block(k, vk1, vk);
    Mat<S> dlm = p.delta.block(k - 1, vk, vkm);
    Mat<S> Xk = Xat(k), Xk1 = Xat(k + 1);

    if (wk && vk1) {
      Mat<S> xdio = Xk1 * dl * io;
      out.iota.set_block(k, io + r.eta.block(k + 1, vk, vk1) * xdio);
      if (wk1) {
        Mat<S> dW = r.pi.block(k + 1, wk1, vk1) * xdio;
        out.small.set_diff(k, r.small.diff(k) + dW);
      }
    } else if (wk) {
      out.iota.set_block(k, io);
    }
    if (vk) {
      if (wk) out.pi.set_block(k, pr + pr * Xk * dlm * et);
      out.eta.set_block(k, et + et * Xk * dlm * et);
      if (vk1) {
        Mat<S> nd = r.big.diff(k) + dl;
        if (!nd.is_zero()) out.big.d[k] = nd;
        else out.big.d.erase(k);
      }
    }
  }
  return out;
}

// Lemma about stacking retractions: r1 retracts V2 onto V1, r2 retracts V3
// onto V2; the composite is (iota2 iota1, pi1 pi2, eta2 + iota2 eta1 pi2).
template <class S>
Retraction<S> compose_retractions(const Retraction<S>& r1, const Retraction<S>& r2,
                                  double tol = 0) {
  if (!r1.big.same_shape(r2.small, tol))
    throw InvalidInput("middle complexes of the composition differ");
  Retraction<S> out;
  out.small = r1.small;
  out.big = r2.big;
  out.iota = GradedMap<S>(0);
  out.pi = GradedMap<S>(0);
  out.eta = GradedMap<S>(-1);
  out.exempt_degrees = r1.exempt_degrees;
  out.exempt_degrees.insert(r2.exempt_degrees.begin(), r2.exempt_degrees.end());
  int lo = r2.big.min_degree() - 1, hi = r2.big.max_degree() + 1;
  for (int k = lo; k <= hi; k++) {
    int w1 = r1.small.dim(k);
    int v2 = r2.small.dim(k), v2m = r2.small.dim(k - 1);
    int v3 = r2.big.dim(k), v3m = r2.big.dim(k - 1);
    if (w1 && v3) out.iota.set_block(k, r2.iota.block(k, v3, v2) * r1.iota.block(k, v2, w1));
    if (w1 && v3) out.pi.set_block(k, r1.pi.block(k, w1, v2) * r2.pi.block(k, v2, v3));
    if (v3) {
      Mat<S> et = r2.eta.block(k, v3m, v3);
      if (v2 && v2m && v3m)
        et = et + r2.iota.block(k - 1, v3m, v2m) * r1.eta.block(k, v2m, v2) *
                      r2.pi.block(k, v2, v3);
      out.eta.set_block(k, et);
    }
  }
  return out;
}

struct CompatibilityReport {
  AxiomCheck a1, a2, a3;          // preconditions
  AxiomCheck delta_match, pi_match;  // conclusions
  bool preconditions_ok() const { return a1.pass && a2.pass && a3.pass; }
  bool ok() const { return preconditions_ok() && delta_match.pass && pi_match.pass; }
};

// Compatibility of stacked perturbations: r1 retracts V2 onto V1, r2
// retracts V3 onto V2, d3 perturbs V3 and d2 perturbs V2. When
//   eta2 d3 iota2 = 0,  eta1 d2 iota1 = 0,  d2 = pi2 d3 iota2
// the induced differential on V1 and the perturbed projections agree whether
// the tower is collapsed before or after perturbing.
template <class S>
CompatibilityReport check_projection_compatibility(const Retraction<S>& r1,
                                                   const Retraction<S>& r2,
                                                   const Perturbation<S>& d2,
                                                   const Perturbation<S>& d3,
                                                   double tol = 0) {
  CompatibilityReport rep;
  auto measure = [&](const char* name, double resid) {
    return AxiomCheck{name, 0, resid <= tol, resid};
  };

  double ra1 = 0, ra2 = 0, ra3 = 0;
  for (int k = r2.big.min_degree() - 1; k <= r2.big.max_degree() + 1; k++) {
    int v1 = r1.small.dim(k);
    int v2 = r2.small.dim(k), v2p = r2.small.dim(k + 1);
    int v3 = r2.big.dim(k), v3p = r2.big.dim(k + 1);
    if (v2) {
      Mat<S> m = r2.eta.block(k + 1, v3, v3p) * d3.delta.block(k, v3p, v3) *
                 r2.iota.block(k, v3, v2);
      ra1 = std::max(ra1, m.max_mag());
      Mat<S> e = r2.pi.block(k + 1, v2p, v3p) * d3.delta.block(k, v3p, v3) *
                     r2.iota.block(k, v3, v2) -
                 d2.delta.block(k, v2p, v2);
      ra3 = std::max(ra3, e.max_mag());
    }
    if (v1) {
      Mat<S> m = r1.eta.block(k + 1, v2, v2p) * d2.delta.block(k, v2p, v2) *
                 r1.iota.block(k, v2, v1);
      ra2 = std::max(ra2, m.max_mag());
    }
  }
  rep.a1 = measure("eta2_delta3_iota2_vanishes", ra1);
  rep.a2 = measure("eta1_delta2_iota1_vanishes", ra2);
  rep.a3 = measure("delta2_is_projected_delta3", ra3);

  Retraction<S> through_tower = perturb(compose_retractions(r1, r2, tol), d3);
  Retraction<S> two_step_lower = perturb(r1, d2);
  Retraction<S> two_step_upper = perturb(r2, d3);

  double rd = 0, rp = 0;
  for (int k = r1.small.min_degree() - 1; k <= r1.small.max_degree() + 1; k++) {
    int v1 = r1.small.dim(k), v1p = r1.small.dim(k + 1);
    if (v1 && v1p)
      rd = std::max(rd, Mat<S>(through_tower.small.diff(k) - two_step_lower.small.diff(k))
                            .max_mag());
    int v2 = r2.small.dim(k), v3 = r2.big.dim(k);
    if (v1 && v3) {
      Mat<S> lhs = through_tower.pi.block(k, v1, v3);
      Mat<S> rhs = two_step_lower.pi.block(k, v1, v2) * two_step_upper.pi.block(k, v2, v3);
      rp = std::max(rp, Mat<S>(lhs - rhs).max_mag());
    }
  }
  rep.delta_match = measure("induced_differentials_agree", rd);
  rep.pi_match = measure("perturbed_projections_compose", rp);
  return rep;
}

}  // namespace bvdet
