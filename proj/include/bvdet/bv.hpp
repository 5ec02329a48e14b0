#pragma once

#include <stdexcept>
#include <vector>

#include "bvdet/complexes.hpp"
#include "bvdet/element.hpp"
#include "bvdet/pfaffian.hpp"

namespace bvdet {

// Monomial basis of the xi-degree <= N truncation, one stratum per
// xi-degree. Cohomological degree of stratum j is -j.
template <class S>
struct StratifiedBasis {
  GenSpec sp;
  int N = 0;
  std::vector<std::vector<Monomial>> strata;
  std::vector<std::map<Monomial, int>> pos;

  StratifiedBasis() = default;
  StratifiedBasis(GenSpec s, int n) : sp(s), N(n) {
    for (int j = 0; j <= N; j++) {
      strata.push_back(monomials_of_xi_degree(sp, j));
      pos.emplace_back();
      for (size_t i = 0; i < strata[j].size(); i++) pos[j][strata[j][i]] = int(i);
    }
  }

  int dim(int j) const { return (j < 0 || j > N) ? 0 : int(strata[j].size()); }

  CochainComplex<S> shape() const {
    CochainComplex<S> c;
    for (int j = 0; j <= N; j++) c.set_dim(-j, dim(j));
    return c;
  }

  Mat<S> coords(const Element<S>& f, int j) const {
    Mat<S> v(dim(j), 1);
    for (auto& [mo, c] : f.terms) {
      auto it = pos[j].find(mo);
      if (it == pos[j].end())
        throw std::logic_error("element leaves the expected stratum");
      v.at(it->second, 0) = c;
    }
    return v;
  }

  Element<S> element(const Mat<S>& v, int j) const {
    Element<S> f(sp);
    for (int i = 0; i < dim(j); i++)
      if (!ScalarOps<S>::is_zero(v.at(i, 0))) f.add_term(strata[j][i], v.at(i, 0));
    return f;
  }

  // matrix of a linear operator mapping stratum src_j into stratum dst_j
  template <class Op>
  Mat<S> op_block(Op&& op, int src_j, int dst_j) const {
    Mat<S> m(dim(dst_j), dim(src_j));
    for (int col = 0; col < dim(src_j); col++) {
      Element<S> img = op(Element<S>::monomial(sp, strata[src_j][col], ScalarOps<S>::one()));
      for (auto& [mo, c] : img.terms) {
        auto it = pos[dst_j].find(mo);
        if (it == pos[dst_j].end())
          throw std::logic_error("operator image leaves the expected stratum");
        m.at(it->second, col) = c;
      }
    }
    return m;
  }
};

enum class BVVariant { Classical, Quantum, TrivialQuantum };

// Observable complex of a skew form at truncation N: the span of monomials
// of xi-degree <= N with differential A-flat (classical), A-flat + the odd
// laplacian (quantum), or the odd laplacian alone (trivial quantum). Both
// pieces lower xi-degree by one, so the truncation is a subcomplex.
template <class S>
struct BVComplex {
  SkewForm<S> A;
  int N = 0;
  BVVariant variant = BVVariant::Classical;
  GenSpec sp;
  StratifiedBasis<S> basis;
  Derivation<S> a_flat;
  SecondOrderOp<S> delta;
  CochainComplex<S> complex;

  Element<S> apply_diff(const Element<S>& f) const {
    Element<S> out(sp);
    if (variant != BVVariant::TrivialQuantum) out += a_flat.apply(f);
    if (variant != BVVariant::Classical) out += delta.apply(f);
    return out;
  }
};

// first-order piece: the derivation sending xi_k to -sum_j A_kj x_j
template <class S>
Derivation<S> a_flat_derivation(const SkewForm<S>& A) {
  int n = A.dim();
  GenSpec sp{n, n};
  Derivation<S> d(sp, 1, 0);
  for (int k = 0; k < n; k++) {
    Element<S> img(sp);
    for (int j = 0; j < n; j++) {
      if (ScalarOps<S>::is_zero(A.a.at(k, j))) continue;
      img += (-A.a.at(k, j)) * Element<S>::gen_x(sp, j);
    }
    d.dxi[k] = img;
  }
  d.validate();
  return d;
}

template <class S>
BVComplex<S> build_bv(const SkewForm<S>& A, int N, BVVariant variant, double tol = 0) {
  if (N < 0) throw InvalidInput("truncation must be nonnegative");
  int n = A.dim();
  BVComplex<S> bv;
  bv.A = A;
  bv.N = N;
  bv.variant = variant;
  bv.sp = GenSpec{n, n};
  bv.basis = StratifiedBasis<S>(bv.sp, N);
  bv.a_flat = a_flat_derivation(A);
  bv.delta = odd_laplacian<S>(bv.sp);
  bv.complex = bv.basis.shape();
  auto op = [&](const Element<S>& f) { return bv.apply_diff(f); };
  for (int j = 1; j <= N; j++) bv.complex.set_diff(-j, bv.basis.op_block(op, j, j - 1));
  // the square must vanish identically; failure signals a sign-rule bug
  for (int j = 2; j <= N; j++)
    for (const Monomial& mo : bv.basis.strata[j]) {
      Element<S> dd =
          bv.apply_diff(bv.apply_diff(Element<S>::monomial(bv.sp, mo, ScalarOps<S>::one())));
      dd.cleanup(tol);
      if (!dd.zero()) throw std::logic_error("observable differential does not square to zero");
    }
  return bv;
}

// Multiplication by e^A as a map from the quantum complex to the trivial
// quantum complex: verified to intertwine the differentials and to be
// invertible stratum by stratum.
template <class S>
std::pair<GradedMap<S>, AxiomReport> exp_A_isomorphism(const BVComplex<S>& Cq,
                                                       const BVComplex<S>& C0,
                                                       double tol = 0) {
  if (Cq.variant != BVVariant::Quantum || C0.variant != BVVariant::TrivialQuantum)
    throw InvalidInput("expected a quantum and a trivial quantum complex");
  if (Cq.N != C0.N || Cq.A.dim() != C0.A.dim() ||
      !Mat<S>(Cq.A.a - C0.A.a).is_zero(tol))
    throw InvalidInput("complexes disagree on the form or the truncation");

  Element<S> E = exp_nilpotent(Cq.A.as_element(Cq.sp));
  auto mul_by_E = [&](const Element<S>& f) { return E * f; };
  GradedMap<S> map(0);
  AxiomReport rep;
  for (int j = 0; j <= Cq.N; j++) {
    Mat<S> blk = Cq.basis.op_block(mul_by_E, j, j);
    double inv_res = (rank(blk, 1e-9) == blk.rows) ? 0 : 1;
    rep.checks.push_back({"multiplication_block_invertible", -j, inv_res <= tol, inv_res});
    map.set_block(-j, std::move(blk));
  }
  for (int j = 1; j <= Cq.N; j++) {
    double worst = 0;
    for (const Monomial& mo : Cq.basis.strata[j]) {
      Element<S> m = Element<S>::monomial(Cq.sp, mo, ScalarOps<S>::one());
      Element<S> resid = E * Cq.apply_diff(m) - C0.apply_diff(E * m);
      worst = std::max(worst, resid.max_mag());
    }
    rep.checks.push_back({"intertwines_differentials", -j, worst <= tol, worst});
  }
  return {std::move(map), std::move(rep)};
}

// the coefficient of x_1...x_n of an element of the x-only subalgebra
template <class S>
S berezin(const Element<S>& f) {
  for (auto& [mo, c] : f.terms)
    if (!mo.xi.empty()) throw InvalidInput("integrand contains xi generators");
  return f.top_x_coeff();
}

// Inverse of the odd pairing, as the coefficient matrix g of the
// second-order operator sum g_ab d_xi_b d_x_a. Against a pairing matrix
// P_ij = <x-vector i, xi-vector j> the defining contraction identity forces
// g = (P^T)^-1; the standard rule pairs x_i with xi_i so that g = id.
template <class S>
struct PairingInverse {
  GenSpec sp;
  Mat<S> g;

  SecondOrderOp<S> laplacian() const {
    SecondOrderOp<S> op(sp);
    for (int a = 0; a < sp.n; a++)
      for (int b = 0; b < sp.m; b++)
        if (!ScalarOps<S>::is_zero(g.at(a, b)))
          op.rules.push_back({GenRef{GenRef::X, a}, GenRef{GenRef::XI, b}, g.at(a, b)});
    return op;
  }

  // residual of -(id (x) <,>)(<,>^-1 (x) v) = v over all generators v,
  // evaluated as the matrix identities g P^T = P^T g = id
  double defining_residual(const Mat<S>& P) const {
    Mat<S> pt = P.transpose();
    double r = Mat<S>(g * pt - Mat<S>::identity(sp.n)).max_mag();
    return std::max(r, Mat<S>(pt * g - Mat<S>::identity(sp.n)).max_mag());
  }
};

template <class S>
PairingInverse<S> pairing_inverse(const Mat<S>& P, double eps = 1e-12) {
  if (P.rows != P.cols) throw InvalidInput("pairing matrix must be square");
  PairingInverse<S> pi;
  pi.sp = GenSpec{P.rows, P.rows};
  try {
    pi.g = inverse(P.transpose(), eps);
  } catch (const InvalidInput&) {
    throw InvalidInput("pairing is degenerate");
  }
  return pi;
}

// Deformation retraction of the truncated observable algebra onto the Sym
// algebra of a retained block of generator pairs, generated from linear data:
//   D: the differential on generators (xi-span -> x-span),
//   Hx/K: bases of the retained x-part and xi-part,
//   pi0/pi1: their coordinate projections,
//   eta_lin: the linear homotopy (x-span -> xi-span), supported off the
//   retained block.
// The retained block may carry a differential of its own (small_form, the
// skew form pi0 D K); when it is zero this is the retraction onto the
// harmonic algebra. The homotopy is lifted to words multiplicatively: in
// generators adapted to retained + acyclic, apply eta factor by factor and
// divide by the number of acyclic factors. The side conditions eta iota = 0
// and pi eta = 0, verified here, are what make that one-line lift work, and
// they keep the lift blind to the retained factors, so a nonzero small_form
// does not enter the homotopy identity.
template <class S>
struct SymRetraction {
  GenSpec big_sp, small_sp;
  int N = 0;
  Mat<S> D, Hx, K, C, F, pi0, pi1, eta_lin;
  Mat<S> pairing;     // Hx^T K, the induced inverse pairing on the small side
  Mat<S> small_form;  // pi0 D K, the skew form of the retained differential
  Substitution<S> incl, proj, to_ad, from_ad;
  Derivation<S> lift;  // eta on adapted generators, before the 1/s weight

  Element<S> iota(const Element<S>& f) const { return incl.apply(f); }
  Element<S> pi(const Element<S>& f) const { return proj.apply(f); }

  Element<S> eta(const Element<S>& f) const {
    int h = small_sp.n;
    Element<S> ad = to_ad.apply(f);
    Element<S> out(big_sp);
    for (auto& [mo, c] : ad.terms) {
      int s = 0;
      for (uint64_t mk = mo.xmask >> h; mk; mk &= mk - 1) s++;
      for (auto& [i, e] : mo.xi)
        if (i >= h) s += e;
      if (s == 0) continue;
      out += (ScalarOps<S>::one() / ScalarOps<S>::from_int(s)) * lift.apply_mono(mo, c);
    }
    return from_ad.apply(out).truncate_xi(N);
  }
};

template <class S>
SymRetraction<S> make_sym_retraction(int N, const Mat<S>& D, const Mat<S>& Hx, const Mat<S>& K,
                                     const Mat<S>& pi0, const Mat<S>& pi1, const Mat<S>& eta_lin,
                                     double tol = 0, double eps = 1e-12,
                                     const Mat<S>* coexact = nullptr) {
  int n = D.rows;
  int h = Hx.cols;
  if (D.cols != n || Hx.rows != n || K.rows != n || K.cols != h)
    throw InvalidInput("linear retraction data has mismatched shapes");
  auto expect_zero = [&](const Mat<S>& m, const char* what) {
    if (!m.is_zero(tol)) throw InvalidInput(std::string("linear retraction axiom failed: ") + what);
  };
  Mat<S> small_form = pi0 * D * K;
  expect_zero(small_form + small_form.transpose(), "retained differential is a skew form");
  expect_zero(D * K - Hx * small_form, "inclusion of the retained block is a chain map");
  expect_zero(pi0 * D - small_form * pi1, "projection onto the retained block is a chain map");
  expect_zero(pi0 * Hx - Mat<S>::identity(h), "pi0 iota0 = id");
  expect_zero(pi1 * K - Mat<S>::identity(h), "pi1 iota1 = id");
  expect_zero(D * eta_lin - (Hx * pi0 - Mat<S>::identity(n)), "d eta = iota pi - id on x side");
  expect_zero(eta_lin * D - (K * pi1 - Mat<S>::identity(n)), "eta d = iota pi - id on xi side");
  expect_zero(eta_lin * Hx, "eta iota = 0");
  expect_zero(pi1 * eta_lin, "pi eta = 0");

  SymRetraction<S> r;
  r.N = N;
  r.big_sp = GenSpec{n, n};
  r.small_sp = GenSpec{h, h};
  r.D = D;
  r.Hx = Hx;
  r.K = K;
  r.pi0 = pi0;
  r.pi1 = pi1;
  r.eta_lin = eta_lin;
  r.small_form = std::move(small_form);
  r.C = coexact ? *coexact : nullspace(pi1, eps);
  if (r.C.rows != n || r.C.cols != n - h)
    throw InvalidInput("coexact basis has the wrong shape");
  expect_zero(pi1 * r.C, "coexact basis avoids the retained xi block");
  r.F = D * r.C;
  expect_zero(eta_lin * r.F + r.C, "eta maps the image basis to minus the coexact basis");
  r.pairing = Hx.transpose() * K;

  Mat<S> B0 = Mat<S>::hcat(Hx, r.F), B1 = Mat<S>::hcat(K, r.C);
  Mat<S> B0i = inverse(B0, eps), B1i = inverse(B1, eps);

  r.incl = Substitution<S>(r.small_sp, r.big_sp);
  for (int a = 0; a < h; a++)
    for (int i = 0; i < n; i++) {
      r.incl.fx[a] += Hx.at(i, a) * Element<S>::gen_x(r.big_sp, i);
      r.incl.fxi[a] += K.at(i, a) * Element<S>::gen_xi(r.big_sp, i);
    }
  r.proj = Substitution<S>(r.big_sp, r.small_sp);
  for (int i = 0; i < n; i++)
    for (int a = 0; a < h; a++) {
      r.proj.fx[i] += pi0.at(a, i) * Element<S>::gen_x(r.small_sp, a);
      r.proj.fxi[i] += pi1.at(a, i) * Element<S>::gen_xi(r.small_sp, a);
    }
  r.to_ad = Substitution<S>(r.big_sp, r.big_sp);
  r.from_ad = Substitution<S>(r.big_sp, r.big_sp);
  for (int i = 0; i < n; i++)
    for (int a = 0; a < n; a++) {
      r.to_ad.fx[i] += B0i.at(a, i) * Element<S>::gen_x(r.big_sp, a);
      r.to_ad.fxi[i] += B1i.at(a, i) * Element<S>::gen_xi(r.big_sp, a);
      r.from_ad.fx[i] += B0.at(a, i) * Element<S>::gen_x(r.big_sp, a);
      r.from_ad.fxi[i] += B1.at(a, i) * Element<S>::gen_xi(r.big_sp, a);
    }
  r.lift = Derivation<S>(r.big_sp, -1, 0);
  for (int j = h; j < n; j++) r.lift.dx[j] = -Element<S>::gen_xi(r.big_sp, j);
  return r;
}

// Lemma-2.8-style retraction of the classical observables onto the Sym
// algebra of the cohomology, with complements chosen G-orthogonally.
template <class S>
SymRetraction<S> classical_retraction(const SkewForm<S>& A, int N,
                                      const Mat<S>* metric = nullptr, double eps = 1e-12) {
  int n = A.dim();
  Mat<S> G = metric ? *metric : Mat<S>::identity(n);
  if (G.rows != n || G.cols != n) throw InvalidInput("metric has wrong shape");
  if (!Mat<S>(G - G.conj_transpose()).is_zero()) throw InvalidInput("metric is not hermitian");

  // the differential on generators sends xi_k to -sum_j A_kj x_j, whose
  // matrix in generator coordinates is A itself
  Mat<S> D = A.a;
  Mat<S> K = nullspace(D, eps);
  int h = K.cols;
  // coexact complement: G-orthogonal to the kernel
  Mat<S> C = nullspace(Mat<S>(K.conj_transpose() * G), eps);
  Mat<S> F = D * C;
  // harmonic x side: G-orthogonal to the image
  Mat<S> Hx = nullspace(Mat<S>(F.conj_transpose() * G), eps);
  if (Hx.cols != h) throw std::logic_error("harmonic dimensions disagree");
  auto coord_proj = [&](const Mat<S>& basis) {
    Mat<S> bg = basis.conj_transpose() * G;
    return inverse(Mat<S>(bg * basis), eps) * bg;
  };
  Mat<S> pi0 = coord_proj(Hx), pi1 = coord_proj(K);
  // eta: invert the restriction of the differential on the coexact part,
  // after G-orthogonal projection onto the image
  Mat<S> P_im = F * coord_proj(F);
  Mat<S> Fleft = inverse(Mat<S>(F.conj_transpose() * F), eps) * F.conj_transpose();
  Mat<S> eta_lin = -(C * Fleft * P_im);
  return make_sym_retraction(N, D, Hx, K, pi0, pi1, eta_lin);
}

// matrices of a Sym retraction on the truncated monomial bases
template <class S>
Retraction<S> sym_retraction_matrices(const SymRetraction<S>& r, const BVComplex<S>& big,
                                      const CochainComplex<S>& small_diff) {
  StratifiedBasis<S> small_basis(r.small_sp, r.N);
  Retraction<S> out;
  out.big = big.complex;
  out.small = small_basis.shape();
  for (auto& [k, m] : small_diff.d) out.small.set_diff(k, m);
  out.exempt_degrees.insert(-r.N);
  for (int j = 0; j <= r.N; j++) {
    Mat<S> io(big.basis.dim(j), small_basis.dim(j));
    for (int col = 0; col < small_basis.dim(j); col++) {
      Element<S> img =
          r.iota(Element<S>::monomial(r.small_sp, small_basis.strata[j][col], ScalarOps<S>::one()));
      Mat<S> v = big.basis.coords(img, j);
      for (int i = 0; i < v.rows; i++) io.at(i, col) = v.at(i, 0);
    }
    out.iota.set_block(-j, std::move(io));
    Mat<S> pr(small_basis.dim(j), big.basis.dim(j));
    for (int col = 0; col < big.basis.dim(j); col++) {
      Element<S> img =
          r.pi(Element<S>::monomial(r.big_sp, big.basis.strata[j][col], ScalarOps<S>::one()));
      Mat<S> v = small_basis.coords(img, j);
      for (int i = 0; i < v.rows; i++) pr.at(i, col) = v.at(i, 0);
    }
    out.pi.set_block(-j, std::move(pr));
    if (j < r.N)
      out.eta.set_block(-j, big.basis.op_block([&](const Element<S>& f) { return r.eta(f); }, j,
                                               j + 1));
  }
  return out;
}

// Retraction of the trivial quantum complex onto the line spanned by the
// top x monomial in degree 0. The homotopy treats a monomial pair by pair:
// the first factor that is not a bare x gets one more xi and the weight
// -1/(new exponent); anything after an x xi^k factor dies.
template <class S>
struct LineRetraction {
  GenSpec sp;
  int N = 0;

  Element<S> iota_unit() const {
    Monomial top;
    top.xmask = (sp.n >= 64) ? ~uint64_t(0) : ((uint64_t(1) << sp.n) - 1);
    return Element<S>::monomial(sp, top, ScalarOps<S>::one());
  }
  S pi(const Element<S>& f) const { return f.top_x_coeff(); }

  Element<S> eta(const Element<S>& f) const {
    Element<S> out(sp);
    for (auto& [mo, c] : f.terms) out += eta_mono(mo, c);
    return out.truncate_xi(N);
  }

  Element<S> eta_mono(const Monomial& mo, const S& coef) const {
    int n = sp.n;
    std::vector<int> xe(n, 0);
    for (auto& [i, e] : mo.xi) xe[i] = e;
    int t = -1;
    for (int i = 0; i < n; i++) {
      bool bare_x = ((mo.xmask >> i) & 1) && xe[i] == 0;
      if (!bare_x) {
        t = i;
        break;
      }
    }
    if (t < 0) return Element<S>(sp);             // the top x monomial
    if ((mo.xmask >> t) & 1) return Element<S>(sp);  // factor x_t xi_t^k, k >= 1
    // reassemble the monomial as the ordered product of its pair factors,
    // with the homotopy applied at slot t; the plain reassembly recovers
    // the sign eps relating mo to that ordering, and eta(mo) = eps eta(prod)
    Element<S> prod = Element<S>::scalar(sp, coef);
    Element<S> probe = Element<S>::scalar(sp, ScalarOps<S>::one());
    for (int i = 0; i < n; i++) {
      Monomial fac;
      if ((mo.xmask >> i) & 1) fac.xmask = uint64_t(1) << i;
      if (xe[i] > 0) fac.xi = {{i, xe[i]}};
      if (!fac.is_one()) probe = probe * Element<S>::monomial(sp, fac, ScalarOps<S>::one());
      if (i == t) {
        Monomial im;
        im.xmask = uint64_t(1) << t;
        im.xi = {{t, xe[t] + 1}};
        S w = -(ScalarOps<S>::one() / ScalarOps<S>::from_int(xe[t] + 1));
        prod = prod * Element<S>::monomial(sp, im, w);
      } else if (!fac.is_one()) {
        prod = prod * Element<S>::monomial(sp, fac, ScalarOps<S>::one());
      }
    }
    auto it = probe.terms.find(mo);
    if (it == probe.terms.end()) throw std::logic_error("pair factorization lost the monomial");
    return it->second * prod;
  }

  Retraction<S> as_matrices(const BVComplex<S>& big) const {
    Retraction<S> out;
    out.big = big.complex;
    out.small.set_dim(0, 1);
    out.exempt_degrees.insert(-N);
    Mat<S> io(big.basis.dim(0), 1);
    Mat<S> v = big.basis.coords(iota_unit(), 0);
    for (int i = 0; i < v.rows; i++) io.at(i, 0) = v.at(i, 0);
    out.iota.set_block(0, std::move(io));
    Mat<S> pr(1, big.basis.dim(0));
    for (int col = 0; col < big.basis.dim(0); col++)
      pr.at(0, col) = pi(Element<S>::monomial(sp, big.basis.strata[0][col], ScalarOps<S>::one()));
    out.pi.set_block(0, std::move(pr));
    for (int j = 0; j < N; j++)
      out.eta.set_block(-j,
                        big.basis.op_block([&](const Element<S>& f) { return eta(f); }, j, j + 1));
    return out;
  }
};

template <class S>
LineRetraction<S> trivial_quantum_retraction(int n, int N) {
  if (N < n) throw InvalidInput("truncation too small to hold the top monomial");
  return LineRetraction<S>{GenSpec{n, n}, N};
}

// Quantum retraction of the truncated quantum observables onto the one
// dimensional space in degree 0 carrying the top harmonic form: the
// classical retraction perturbed by the odd laplacian, stacked with the
// line retraction of the small algebra carried across the pairing
// normalization xi |-> c^-1 xi. The perturbation series collapses because
// eta iota = 0 and the laplacian keeps harmonic words harmonic, so the
// induced small differential is the laplacian of the induced pairing; both
// facts are checked at construction rather than assumed.
template <class S>
struct QuantumRetraction {
  SymRetraction<S> cl;
  SecondOrderOp<S> delta_h;  // induced laplacian on the small algebra
  Mat<S> pairing_inv;
  Substitution<S> normalize, denormalize;
  LineRetraction<S> line;
  bool has_matrices = false;
  BVComplex<S> big;        // quantum variant, built along with the matrices
  Retraction<S> matrices;  // full composite, onto dim 1 in degree 0

  // the inclusion of the unit, through the honest perturbation series
  // iota-hat = iota + eta X delta iota applied to the normalized top word
  Element<S> iota_unit(int max_iter = 256) const {
    Element<S> u = cl.iota(normalize.apply(line.iota_unit()));
    SecondOrderOp<S> delta = odd_laplacian<S>(cl.big_sp);
    Element<S> acc = u;
    Element<S> t = cl.eta(delta.apply(u));
    for (int k = 0; !t.zero(); k++) {
      if (k >= max_iter) throw std::logic_error("inclusion series did not terminate");
      acc += t;
      t = cl.eta(delta.apply(t));
    }
    return acc;
  }
};

template <class S>
QuantumRetraction<S> quantum_retraction(const SkewForm<S>& A, int N,
                                        const Mat<S>* metric = nullptr,
                                        bool with_matrices = true, double tol = 0,
                                        double eps = 1e-12) {
  int n = A.dim();
  if (N < n) throw InvalidInput("truncation too small: need N >= dim W");
  QuantumRetraction<S> q;
  q.cl = classical_retraction(A, N, metric, eps);
  int h = q.cl.small_sp.n;
  SecondOrderOp<S> delta_big = odd_laplacian<S>(q.cl.big_sp);

  // induced pairing and its laplacian on the small algebra
  PairingInverse<S> pinv_small;
  pinv_small.sp = q.cl.small_sp;
  pinv_small.g = q.cl.pairing;
  q.delta_h = pinv_small.laplacian();
  q.pairing_inv = inverse(q.cl.pairing, eps);

  q.line = LineRetraction<S>{q.cl.small_sp, N};
  q.normalize = Substitution<S>(q.cl.small_sp, q.cl.small_sp);
  q.denormalize = Substitution<S>(q.cl.small_sp, q.cl.small_sp);
  for (int a = 0; a < h; a++) {
    q.normalize.fx[a] = Element<S>::gen_x(q.cl.small_sp, a);
    q.denormalize.fx[a] = Element<S>::gen_x(q.cl.small_sp, a);
    for (int b = 0; b < h; b++) {
      q.normalize.fxi[a] += q.pairing_inv.at(b, a) * Element<S>::gen_xi(q.cl.small_sp, b);
      q.denormalize.fxi[a] += q.cl.pairing.at(b, a) * Element<S>::gen_xi(q.cl.small_sp, b);
    }
  }

  // verify the collapse of the perturbation series:
  // eta(Delta(iota(m))) = 0 and pi(Delta(iota(m))) = Delta_small(m).
  // The quadratic words pin the induced pairing; the laplacian expands on
  // longer words by pairwise contraction, so a bounded sample per stratum
  // guards the sign bookkeeping without an exhaustive sweep.
  auto check_collapse = [&](const Element<S>& m) {
    Element<S> di = delta_big.apply(q.cl.iota(m));
    Element<S> e1 = q.cl.eta(di);
    e1.cleanup(tol);
    if (!e1.zero()) throw std::logic_error("perturbation series failed to collapse");
    Element<S> resid = q.cl.pi(di) - q.delta_h.apply(m);
    resid.cleanup(tol);
    if (!resid.zero())
      throw std::logic_error("induced small differential is not the induced laplacian");
  };
  for (int a = 0; a < h; a++)
    for (int b = 0; b < h; b++)
      check_collapse(Element<S>::gen_x(q.cl.small_sp, a) * Element<S>::gen_xi(q.cl.small_sp, b));
  StratifiedBasis<S> small_basis(q.cl.small_sp, N);
  for (int j = 0; j <= N; j++) {
    int cap = std::min<int>(small_basis.dim(j), 40);
    for (int i = 0; i < cap; i++)
      check_collapse(
          Element<S>::monomial(q.cl.small_sp, small_basis.strata[j][i], ScalarOps<S>::one()));
  }
  if (!with_matrices) return q;

  // matrix route: perturb the classical retraction by the laplacian, then
  // stack the normalized line retraction of the small algebra
  q.big = build_bv(A, N, BVVariant::Quantum, tol);
  BVComplex<S> big_cl = build_bv(A, N, BVVariant::Classical, tol);
  Retraction<S> r_cl = sym_retraction_matrices(q.cl, big_cl, CochainComplex<S>{});
  Perturbation<S> dp;
  for (int j = 1; j <= N; j++)
    dp.delta.set_block(
        -j, big_cl.basis.op_block([&](const Element<S>& f) { return delta_big.apply(f); }, j,
                                  j - 1));
  Retraction<S> r_mid = perturb(r_cl, dp, InversePolicy::Auto, tol, eps);
  if (!r_mid.big.same_shape(q.big.complex, tol))
    throw std::logic_error("perturbed complex is not the quantum complex");

  CochainComplex<S> small_q = small_basis.shape();
  for (int j = 1; j <= N; j++)
    small_q.set_diff(-j, small_basis.op_block(
                             [&](const Element<S>& f) { return q.delta_h.apply(f); }, j, j - 1));

  Retraction<S> r_line;
  r_line.big = small_q;
  r_line.small.set_dim(0, 1);
  r_line.exempt_degrees.insert(-N);
  {
    Mat<S> v = small_basis.coords(q.normalize.apply(q.line.iota_unit()), 0);
    Mat<S> io(small_basis.dim(0), 1);
    for (int i = 0; i < v.rows; i++) io.at(i, 0) = v.at(i, 0);
    r_line.iota.set_block(0, std::move(io));
    Mat<S> pr(1, small_basis.dim(0));
    for (int col = 0; col < small_basis.dim(0); col++)
      pr.at(0, col) = q.line.pi(q.denormalize.apply(
          Element<S>::monomial(q.cl.small_sp, small_basis.strata[0][col], ScalarOps<S>::one())));
    r_line.pi.set_block(0, std::move(pr));
    auto eta_conj = [&](const Element<S>& f) {
      return q.normalize.apply(q.line.eta(q.denormalize.apply(f)));
    };
    for (int j = 0; j < N; j++)
      r_line.eta.set_block(-j, small_basis.op_block(eta_conj, j, j + 1));
  }
  q.matrices = compose_retractions(r_line, r_mid, tol);
  q.has_matrices = true;
  return q;
}

// Lazy one-sided perturbed projection: pi_hat = pi + sum_k pi (delta eta)^k,
// applied to a single element; terminates because delta eta shortens words.
template <class S, class PiF, class EtaF, class DeltaF>
Element<S> perturbed_pi(PiF&& pi, EtaF&& eta, DeltaF&& delta, const Element<S>& f,
                        int max_iter = 256) {
  Element<S> acc = pi(f);
  Element<S> cur = f;
  for (int k = 0; k < max_iter; k++) {
    cur = delta(eta(cur));
    if (cur.zero()) return acc;
    acc += pi(cur);
  }
  throw InvalidInput("perturbation series did not terminate");
}

}  // namespace bvdet
