#include "bvdet/family.hpp"

namespace bvdet {

BaseGrid circle_grid(int n) {
  if (n < 1) throw InvalidInput("circle grid needs at least one sample");
  BaseGrid g;
  g.kind = GridKind::Circle;
  const double two_pi = 2 * std::acos(-1.0);
  for (int i = 0; i < n; i++) g.theta.push_back(two_pi * i / n);
  return g;
}

BaseGrid interval_grid(int n, double a, double b) {
  if (n < 2) throw InvalidInput("interval grid needs at least two samples");
  BaseGrid g;
  g.kind = GridKind::Interval;
  for (int i = 0; i < n; i++) g.theta.push_back(a + (b - a) * i / (n - 1));
  return g;
}

OperatorFamily<Cplx> scalar_family(const BaseGrid& grid, const std::function<Cplx(double)>& f) {
  std::vector<Mat<Cplx>> mats;
  for (double th : grid.theta) {
    Mat<Cplx> m(1, 1);
    m.at(0, 0) = f(th);
    mats.push_back(std::move(m));
  }
  return make_family(grid, std::move(mats));
}

OperatorFamily<Cplx> lattice_dirac_family(const BaseGrid& grid, int sites,
                                          const std::function<Cplx(double)>& mass) {
  if (sites < 1) throw InvalidInput("lattice needs at least one site");
  std::vector<Mat<Cplx>> mats;
  for (double th : grid.theta) {
    Mat<Cplx> m(sites, sites);
    Cplx mv = mass(th);
    for (int k = 0; k < sites; k++) {
      m.at((k + 1) % sites, k) += Cplx{1, 0};
      m.at(k, k) += mv - Cplx{1, 0};
    }
    mats.push_back(std::move(m));
  }
  return make_family(grid, std::move(mats));
}

namespace detail {

Mat<Cplx> orthonormalize(Mat<Cplx> f, double drop_tol) {
  for (int j = 0; j < f.cols; j++) {
    for (int k = 0; k < j; k++) {
      Cplx dot{0, 0};
      for (int i = 0; i < f.rows; i++) dot += std::conj(f.at(i, k)) * f.at(i, j);
      for (int i = 0; i < f.rows; i++) f.at(i, j) -= dot * f.at(i, k);
    }
    double nrm = 0;
    for (int i = 0; i < f.rows; i++) nrm += std::norm(f.at(i, j));
    nrm = std::sqrt(nrm);
    if (nrm < drop_tol) throw InvalidInput("frame transport degenerated between samples");
    for (int i = 0; i < f.rows; i++) f.at(i, j) /= nrm;
  }
  return f;
}

}  // namespace detail

namespace {

std::vector<Cplx> eigenvalues_of(const Mat<Cplx>& m) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(to_eigen(m), false);
  if (es.info() != Eigen::Success) throw InvalidInput("eigendecomposition failed");
  std::vector<Cplx> v(es.eigenvalues().data(), es.eigenvalues().data() + m.rows);
  return v;
}

// match each path end to the closest unused eigenvalue of the next sample
std::vector<int> greedy_match(const std::vector<Cplx>& prev, const std::vector<Cplx>& next) {
  int n = int(prev.size());
  std::vector<std::tuple<double, int, int>> pairs;
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++) pairs.push_back({std::abs(prev[i] - next[j]), i, j});
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
  std::vector<int> to(n, -1);
  std::vector<char> used(n, 0);
  int assigned = 0;
  for (const auto& [d, i, j] : pairs) {
    if (to[i] >= 0 || used[j]) continue;
    to[i] = j;
    used[j] = 1;
    if (++assigned == n) break;
  }
  return to;
}

int sgn(double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

// signed crossings of the ray (-inf, 0) by one eigenvalue polyline, upper to
// lower half plane positive; exact touches of the real axis count once per
// actual sign change and never when the path returns to the side it came from
int ray_crossings(const std::vector<Cplx>& path) {
  int flow = 0;
  int last_sign = 0;
  Cplx last_off{0, 0};
  bool have_axis = false;
  double axis_re = 0;
  for (const Cplx& p : path) {
    int s = sgn(p.imag());
    if (s == 0) {
      if (last_sign != 0) {
        have_axis = true;
        axis_re = p.real();
      }
      continue;
    }
    if (last_sign != 0 && s != last_sign) {
      double re_c;
      if (have_axis) {
        re_c = axis_re;
      } else {
        double t = last_off.imag() / (last_off.imag() - p.imag());
        re_c = last_off.real() + t * (p.real() - last_off.real());
      }
      if (re_c < 0) flow += (last_sign > 0) ? 1 : -1;
    }
    last_sign = s;
    last_off = p;
    have_axis = false;
  }
  return flow;
}

}  // namespace

int spectral_flow(const OperatorFamily<Cplx>& fam) {
  if (!fam.grid.closed()) throw InvalidInput("spectral flow needs a closed parameter loop");
  if (fam.rows() != fam.cols()) throw InvalidInput("spectral flow needs square operators");
  int ns = fam.grid.size(), n = fam.rows();
  if (ns < 2) throw InvalidInput("spectral flow needs at least two samples");

  std::vector<Cplx> start = eigenvalues_of(fam.dplus[0]);
  std::vector<std::vector<Cplx>> path(n);
  for (int i = 0; i < n; i++) path[i].push_back(start[i]);
  std::vector<Cplx> cur = start;
  for (int k = 1; k <= ns; k++) {
    std::vector<Cplx> nxt = (k < ns) ? eigenvalues_of(fam.dplus[k]) : start;
    std::vector<int> to = greedy_match(cur, nxt);
    std::vector<Cplx> reord(n);
    for (int i = 0; i < n; i++) reord[i] = nxt[to[i]];
    for (int i = 0; i < n; i++) path[i].push_back(reord[i]);
    cur = reord;
  }

  int flow = 0;
  for (int i = 0; i < n; i++) flow += ray_crossings(path[i]);
  return flow;
}

}  // namespace bvdet
