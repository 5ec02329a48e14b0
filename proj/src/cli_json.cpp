#include <cmath>
#include <functional>
#include <sstream>
#include <utility>

#include "bvdet/bv.hpp"
#include "bvdet/io_json.hpp"

namespace bvdet {
namespace {

std::string get_string(const json& j, const char* what) {
  if (!j.is_string()) throw SchemaError(std::string(what) + " must be a string");
  return j.get<std::string>();
}

// named profiles plus a parametric circle offset + radius * e^{i(w theta + p)}
std::function<Cplx(double)> profile_from_json(const json& j, const char* what) {
  if (j.is_string()) {
    std::string name = j.get<std::string>();
    if (name == "cos") return [](double th) { return Cplx{std::cos(th), 0}; };
    if (name == "winding")
      return [](double th) { return Cplx{0.15, 0} + 0.5 * std::exp(Cplx{0, th}); };
    throw SchemaError(std::string(what) + ": unknown profile \"" + name + "\"");
  }
  if (j.is_number() || j.is_array()) {
    Cplx c = scalar_from_json<Cplx>(j);
    return [c](double) { return c; };
  }
  if (j.is_object()) {
    Cplx off = j.contains("offset") ? scalar_from_json<Cplx>(j.at("offset")) : Cplx{0, 0};
    double rad = j.contains("radius") ? iojson::get_real(j.at("radius"), "radius") : 1.0;
    double wind = j.contains("winding") ? double(iojson::get_int(j.at("winding"), "winding")) : 1.0;
    double ph = j.contains("phase") ? iojson::get_real(j.at("phase"), "phase") : 0.0;
    return [=](double th) { return off + rad * std::exp(Cplx{0, wind * th + ph}); };
  }
  throw SchemaError(std::string(what) + ": expected a profile name, a constant, or an object");
}

}  // namespace

FamilyConfig family_from_json(const json& j) {
  const json& g = iojson::field(j, "grid");
  std::string type = get_string(iojson::field(g, "type"), "grid.type");
  long n = iojson::get_int(iojson::field(g, "n"), "grid.n");
  if (n < 1 || n > 100000) throw SchemaError("grid.n out of range");
  BaseGrid grid;
  if (type == "circle") {
    grid = circle_grid(int(n));
  } else if (type == "interval") {
    if (n < 2) throw SchemaError("interval grids need at least two samples");
    double lo = g.contains("lo") ? iojson::get_real(g.at("lo"), "grid.lo") : 0.0;
    double hi = g.contains("hi") ? iojson::get_real(g.at("hi"), "grid.hi") : 1.0;
    if (!(lo < hi)) throw SchemaError("grid.lo must be below grid.hi");
    grid = interval_grid(int(n), lo, hi);
  } else {
    throw SchemaError("grid.type must be \"circle\" or \"interval\"");
  }

  const json& f = iojson::field(j, "family");
  std::string kind = get_string(iojson::field(f, "kind"), "family.kind");
  FamilyConfig out;
  if (kind == "lattice_dirac") {
    long sites = iojson::get_int(iojson::field(f, "sites"), "family.sites");
    if (sites < 1 || sites > 4096) throw SchemaError("family.sites out of range");
    auto mass =
        profile_from_json(f.contains("mass") ? f.at("mass") : json("winding"), "family.mass");
    out.fam = lattice_dirac_family(grid, int(sites), mass);
  } else if (kind == "scalar") {
    auto val = f.contains("value") ? profile_from_json(f.at("value"), "family.value")
                                   : profile_from_json(f, "family");
    out.fam = scalar_family(grid, val);
  } else if (kind == "explicit") {
    const json& ms = iojson::field(f, "matrices");
    if (!ms.is_array() || ms.empty())
      throw SchemaError("family.matrices must be a non-empty array");
    std::vector<Mat<Cplx>> mats;
    for (const json& m : ms) mats.push_back(matrix_from_json<Cplx>(m));
    try {
      out.fam = make_family(grid, std::move(mats));
    } catch (const InvalidInput& e) {
      throw SchemaError(e.what());
    }
  } else {
    throw SchemaError("family.kind must be \"lattice_dirac\", \"scalar\", or \"explicit\"");
  }

  const json& th = iojson::field(j, "thresholds");
  if (!th.is_array() || th.empty()) throw SchemaError("thresholds must be a non-empty array");
  for (const json& t : th) out.thresholds.push_back(iojson::get_real(t, "threshold"));
  return out;
}

json axiom_report_to_json(const AxiomReport& rep) {
  auto enc = [](const AxiomCheck& c) {
    return json{{"name", c.name}, {"degree", c.degree}, {"pass", c.pass}, {"residual", c.residual}};
  };
  json checks = json::array(), boundary = json::array();
  for (auto& c : rep.checks) checks.push_back(enc(c));
  for (auto& c : rep.boundary_info) boundary.push_back(enc(c));
  json out{{"pass", rep.ok()}, {"max_residual", rep.max_residual()}, {"checks", std::move(checks)}};
  if (!boundary.empty()) out["boundary_info"] = std::move(boundary);
  return out;
}

json det_bundle_report(const DetLineBundle<Cplx>& bundle, const SectionReport<Cplx>& sec,
                       const OperatorFamily<Cplx>& fam) {
  json charts = json::array();
  for (size_t k = 0; k < bundle.charts.size(); k++) {
    const auto& ch = bundle.charts[k];
    json comps = json::array();
    for (const auto& c : ch.components)
      comps.push_back(json{{"samples", c.samples},
                           {"rank_plus", c.rank_plus},
                           {"rank_minus", c.rank_minus},
                           {"projector_residual", c.projector_residual}});
    int members = 0;
    for (char m : ch.member) members += (m != 0);
    charts.push_back(json{{"threshold", bundle.thresholds[k]},
                          {"member_count", members},
                          {"components", std::move(comps)}});
  }

  json trans = json::array();
  for (const auto& t : bundle.transitions)
    trans.push_back(json{{"chart_lo", t.chart_lo},
                         {"chart_hi", t.chart_hi},
                         {"sample", t.sample},
                         {"band_rank", t.band_rank},
                         {"g", scalar_to_json<Cplx>(t.g)}});

  json values = json::array();
  for (const auto& row : sec.value) {
    json r = json::array();
    for (const Cplx& v : row) r.push_back(scalar_to_json<Cplx>(v));
    values.push_back(std::move(r));
  }

  json section{{"values", std::move(values)},
               {"sigma_min", sec.sigma_min},
               {"zeros", sec.zeros},
               {"max_equivariance_residual", sec.max_equivariance_residual},
               {"winding_defined", sec.winding_defined}};
  if (sec.winding_defined) section["winding"] = sec.winding;

  return json{{"samples", fam.grid.size()},
              {"thresholds", bundle.thresholds},
              {"charts", std::move(charts)},
              {"transitions", std::move(trans)},
              {"max_projector_gap", bundle.max_projector_gap},
              {"cocycle_residuals",
               json{{"triples", bundle.cocycle_triples}, {"max", bundle.max_cocycle_residual}}},
              {"section", std::move(section)}};
}

std::string plot_csv(const DetLineBundle<Cplx>& bundle, const SectionReport<Cplx>& sec,
                     const OperatorFamily<Cplx>& fam) {
  std::ostringstream os;
  os.precision(17);
  os << "theta,re_s,im_s,sigma_min\n";
  int ns = fam.grid.size();
  for (int i = 0; i < ns; i++) {
    // trivialize in the widest chart that contains the sample
    Cplx v{0, 0};
    for (int k = int(bundle.charts.size()); k-- > 0;)
      if (bundle.charts[k].is_member(i)) {
        v = sec.value[k][i];
        break;
      }
    os << fam.grid.theta[i] << "," << v.real() << "," << v.imag() << "," << sec.sigma_min[i]
       << "\n";
  }
  return os.str();
}

json pfaffian_report(const json& matrix, bool exact, double tol) {
  json report;
  if (exact) {
    SkewForm<Rat> a(matrix_from_json<Rat>(matrix));
    report["pf"] = scalar_to_json<Rat>(pfaffian(a));
  } else {
    SkewForm<Cplx> a(numeric_matrix_from_json(matrix), tol);
    report["pf"] = scalar_to_json<Cplx>(pfaffian(a));
  }
  return report;
}

namespace {

template <class S>
json observables_report_for(const SkewForm<S>& a, int trunc, double tol) {
  BVComplex<S> quantum = build_bv(a, trunc, BVVariant::Quantum, tol);
  BVComplex<S> trivial = build_bv(a, trunc, BVVariant::TrivialQuantum, tol);
  auto [iso, iso_report] = exp_A_isomorphism(quantum, trivial, tol);
  (void)iso;

  json report;
  report["truncation"] = trunc;
  json dims = json::object();
  for (const auto& [deg, n] : quantum.complex.dims) dims[std::to_string(deg)] = n;
  report["dims"] = std::move(dims);
  json coh = json::object();
  for (const auto& [deg, n] : cohomology_dims(quantum.complex, tol))
    coh[std::to_string(deg)] = n;
  report["cohomology"] = std::move(coh);
  report["pf"] = scalar_to_json<S>(pfaffian(a));
  report["Lemma_2.10_intertwining"] = axiom_report_to_json(iso_report);

  bool pass = iso_report.ok();
  if (trunc >= a.dim()) {
    QuantumRetraction<S> q = quantum_retraction<S>(a, trunc, nullptr, true, tol);
    AxiomReport ax = verify_retraction(q.matrices, tol);
    report["retraction"] = axiom_report_to_json(ax);
    pass = pass && ax.ok();
  }
  report["pass"] = pass;
  return report;
}

template <class S>
json hpl_transfer_report_for(const json& in, double tol) {
  Retraction<S> r = retraction_from_json<S>(iojson::field(in, "retraction"));
  Perturbation<S> p;
  if (in.contains("perturbation"))
    p = perturbation_from_json<S>(in.at("perturbation"), r.big);
  else if (in.contains("delta"))
    p = perturbation_from_json<S>(in, r.big);

  AxiomReport before = verify_retraction(r, tol);
  Retraction<S> out = perturb(r, p, InversePolicy::Auto, tol);
  AxiomReport after = verify_retraction(out, tol);

  json report;
  report["input"] = axiom_report_to_json(before);
  report["perturbed"] = axiom_report_to_json(after);
  report["result"] = retraction_to_json(out);
  report["pass"] = before.ok() && after.ok();
  return report;
}

}  // namespace

json observables_report(const json& matrix, int truncation, bool exact, double tol) {
  if (exact) {
    SkewForm<Rat> a(matrix_from_json<Rat>(matrix));
    return observables_report_for(a, truncation < 0 ? a.dim() : truncation, tol);
  }
  SkewForm<Cplx> a(numeric_matrix_from_json(matrix), tol);
  return observables_report_for(a, truncation < 0 ? a.dim() : truncation, tol);
}

json hpl_transfer_report(const json& input, bool exact, double tol) {
  if (exact) return hpl_transfer_report_for<Rat>(input, tol);
  return hpl_transfer_report_for<Cplx>(input, tol);
}

json family_bundle_report(const json& family, double tol, std::string* plot) {
  FamilyConfig cfg = family_from_json(family);
  DetLineBundle<Cplx> bundle = det_line_bundle(cfg.fam, cfg.thresholds, tol);
  SectionReport<Cplx> sec = det_section(cfg.fam, bundle);

  json report = det_bundle_report(bundle, sec, cfg.fam);
  report["pass"] = bundle.max_cocycle_residual <= tol &&
                   sec.max_equivariance_residual <= tol;
  if (plot) *plot = plot_csv(bundle, sec, cfg.fam);
  return report;
}

}  // namespace bvdet
