#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "bvdet/complexes.hpp"
#include "bvdet/element.hpp"
#include "bvdet/family.hpp"
#include "bvdet/matrix.hpp"
#include "json.hpp"

namespace bvdet {

// std::map-backed json keeps object keys sorted, so dump() over the same
// data is byte-identical run to run.
using json = nlohmann::json;

namespace iojson {

inline long get_int(const json& j, const char* what) {
  if (!j.is_number_integer()) throw SchemaError(std::string(what) + " must be an integer");
  return j.get<long>();
}

inline double get_real(const json& j, const char* what) {
  if (!j.is_number()) throw SchemaError(std::string(what) + " must be a number");
  return j.get<double>();
}

inline const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw SchemaError(std::string("missing field \"") + key + "\"");
  return j.at(key);
}

// rational wire form: "p/q" or "p" strings, or plain integers
inline Rat rat_entry(const json& j) {
  if (j.is_string()) return parse_rat(j.get<std::string>());
  if (j.is_number_integer()) return Rat(j.get<long>());
  throw SchemaError("rational entries are \"p/q\" strings or integers");
}

}  // namespace iojson

template <class S>
S scalar_from_json(const json& j);

template <>
inline Rat scalar_from_json<Rat>(const json& j) {
  return iojson::rat_entry(j);
}

// gaussian rationals: {"re": <rat>, "im": <rat>}, or a bare rational
template <>
inline GaussRat scalar_from_json<GaussRat>(const json& j) {
  if (j.is_object()) {
    GaussRat g;
    if (j.contains("re")) g.re = iojson::rat_entry(j.at("re"));
    if (j.contains("im")) g.im = iojson::rat_entry(j.at("im"));
    if (!j.contains("re") && !j.contains("im"))
      throw SchemaError("complex rational entries need \"re\" or \"im\"");
    return g;
  }
  return GaussRat(iojson::rat_entry(j));
}

template <>
inline double scalar_from_json<double>(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return iojson::rat_entry(j).get_d();
  throw SchemaError("real entries are numbers");
}

// complex doubles: a number, [re, im], or {"re":.., "im":..}
template <>
inline Cplx scalar_from_json<Cplx>(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0};
  if (j.is_array()) {
    if (j.size() != 2 || !j[0].is_number() || !j[1].is_number())
      throw SchemaError("complex entries as arrays are [re, im]");
    return {j[0].get<double>(), j[1].get<double>()};
  }
  if (j.is_object()) {
    double re = j.contains("re") ? iojson::get_real(j.at("re"), "re") : 0;
    double im = j.contains("im") ? iojson::get_real(j.at("im"), "im") : 0;
    return {re, im};
  }
  throw SchemaError("complex entries are numbers, [re, im], or {\"re\",\"im\"}");
}

template <class S>
json scalar_to_json(const S& v);

template <>
inline json scalar_to_json<Rat>(const Rat& v) {
  return rat_str(v);
}
template <>
inline json scalar_to_json<GaussRat>(const GaussRat& v) {
  return json{{"re", rat_str(v.re)}, {"im", rat_str(v.im)}};
}
template <>
inline json scalar_to_json<double>(const double& v) {
  return v;
}
template <>
inline json scalar_to_json<Cplx>(const Cplx& v) {
  return json::array({v.real(), v.imag()});
}

// A matrix is a rectangular array of rows, optionally wrapped as
// {"matrix": [...]}.
template <class S>
Mat<S> matrix_from_json(const json& j0) {
  const json* rows = &j0;
  if (j0.is_object()) rows = &iojson::field(j0, "matrix");
  if (!rows->is_array()) throw SchemaError("matrix must be an array of rows");
  int r = int(rows->size());
  int c = r ? -1 : 0;
  Mat<S> out;
  for (int i = 0; i < r; i++) {
    const json& row = (*rows)[i];
    if (!row.is_array()) throw SchemaError("matrix rows must be arrays");
    if (c < 0) {
      c = int(row.size());
      out = Mat<S>(r, c);
    }
    if (int(row.size()) != c) throw SchemaError("matrix rows have unequal lengths");
    for (int k = 0; k < c; k++) out.at(i, k) = scalar_from_json<S>(row[k]);
  }
  if (r && c == 0) throw SchemaError("matrix rows are empty");
  return out;
}

template <class S>
json matrix_to_json(const Mat<S>& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows; i++) {
    json row = json::array();
    for (int k = 0; k < m.cols; k++) row.push_back(scalar_to_json<S>(m.at(i, k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

// {"spec":{"n":..,"m":..},"terms":[{"x":[..],"xi":[..],"c":..}]} with
// 0-based generator indices; "x" lists distinct ascending indices, "xi"
// lists indices with multiplicity.
template <class S>
Element<S> element_from_json(const json& j) {
  const json& sp = iojson::field(j, "spec");
  long n = iojson::get_int(iojson::field(sp, "n"), "spec.n");
  long m = iojson::get_int(iojson::field(sp, "m"), "spec.m");
  if (n < 0 || n > 62 || m < 0) throw SchemaError("spec.n must be in [0, 62], spec.m >= 0");
  GenSpec spec{int(n), int(m)};
  Element<S> out(spec);
  const json& terms = iojson::field(j, "terms");
  if (!terms.is_array()) throw SchemaError("\"terms\" must be an array");
  for (const json& t : terms) {
    Monomial mo;
    int prev = -1;
    for (const json& xv : iojson::field(t, "x")) {
      long i = iojson::get_int(xv, "x index");
      if (i < 0 || i >= n) throw SchemaError("x index out of range");
      if (i <= prev) throw SchemaError("x indices must be strictly ascending");
      prev = int(i);
      mo.xmask |= uint64_t(1) << i;
    }
    std::vector<int> xis;
    for (const json& xv : iojson::field(t, "xi")) {
      long i = iojson::get_int(xv, "xi index");
      if (i < 0 || i >= m) throw SchemaError("xi index out of range");
      xis.push_back(int(i));
    }
    std::sort(xis.begin(), xis.end());
    for (int i : xis) {
      if (!mo.xi.empty() && mo.xi.back().first == i)
        mo.xi.back().second++;
      else
        mo.xi.emplace_back(i, 1);
    }
    out += Element<S>::monomial(spec, mo, scalar_from_json<S>(iojson::field(t, "c")));
  }
  return out;
}

template <class S>
json element_to_json(const Element<S>& e) {
  json terms = json::array();
  for (auto& [mo, c] : e.terms) {
    json xs = json::array(), xis = json::array();
    for (uint64_t b = mo.xmask; b; b &= b - 1) xs.push_back(std::countr_zero(b));
    for (auto& [i, exp] : mo.xi)
      for (int k = 0; k < exp; k++) xis.push_back(i);
    terms.push_back(json{{"x", std::move(xs)}, {"xi", std::move(xis)}, {"c", scalar_to_json<S>(c)}});
  }
  return json{{"spec", {{"n", e.spec.n}, {"m", e.spec.m}}}, {"terms", std::move(terms)}};
}

namespace iojson {

inline int degree_key(const std::string& s) {
  try {
    size_t pos = 0;
    int k = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return k;
  } catch (const std::exception&) {
    throw SchemaError("degree keys must be integers, got \"" + s + "\"");
  }
}

}  // namespace iojson

// {"dims": {"<degree>": n, ...}, "d": {"<degree>": [[..]], ...}} where the
// block at degree k maps k to k+1 and has shape dim(k+1) x dim(k).
template <class S>
CochainComplex<S> complex_from_json(const json& j) {
  CochainComplex<S> c;
  const json& dims = iojson::field(j, "dims");
  if (!dims.is_object()) throw SchemaError("\"dims\" must be an object");
  for (auto& [key, val] : dims.items()) {
    long n = iojson::get_int(val, "dimension");
    if (n < 0) throw SchemaError("dimensions must be nonnegative");
    c.set_dim(iojson::degree_key(key), int(n));
  }
  if (j.contains("d")) {
    const json& d = j.at("d");
    if (!d.is_object()) throw SchemaError("\"d\" must be an object");
    for (auto& [key, val] : d.items()) {
      int k = iojson::degree_key(key);
      Mat<S> blk = matrix_from_json<S>(val);
      if (blk.rows != c.dim(k + 1) || blk.cols != c.dim(k))
        throw SchemaError("differential block at degree " + key + " has the wrong shape");
      c.set_diff(k, std::move(blk));
    }
  }
  return c;
}

template <class S>
json complex_to_json(const CochainComplex<S>& c) {
  json dims = json::object(), d = json::object();
  for (auto& [k, n] : c.dims) dims[std::to_string(k)] = n;
  for (auto& [k, blk] : c.d) d[std::to_string(k)] = matrix_to_json<S>(blk);
  return json{{"dims", std::move(dims)}, {"d", std::move(d)}};
}

// blocks of a graded map, keyed by source degree; shape of block k is
// rows(k+shift) x cols(k) against the prescribed complexes
template <class S>
GradedMap<S> graded_map_from_json(const json& j, int shift, const CochainComplex<S>& dst,
                                  const CochainComplex<S>& src, const char* what) {
  GradedMap<S> g(shift);
  if (!j.is_object()) throw SchemaError(std::string(what) + " must map degrees to blocks");
  for (auto& [key, val] : j.items()) {
    int k = iojson::degree_key(key);
    Mat<S> blk = matrix_from_json<S>(val);
    if (blk.rows != dst.dim(k + shift) || blk.cols != src.dim(k))
      throw SchemaError(std::string(what) + " block at degree " + key + " has the wrong shape");
    g.set_block(k, std::move(blk));
  }
  return g;
}

template <class S>
json graded_map_to_json(const GradedMap<S>& g) {
  json out = json::object();
  for (auto& [k, blk] : g.blocks) out[std::to_string(k)] = matrix_to_json<S>(blk);
  return out;
}

// {"big": complex, "small": complex, "iota": blocks, "pi": blocks,
//  "eta": blocks, "exempt": [degrees]}
template <class S>
Retraction<S> retraction_from_json(const json& j) {
  Retraction<S> r;
  r.big = complex_from_json<S>(iojson::field(j, "big"));
  r.small = complex_from_json<S>(iojson::field(j, "small"));
  r.iota = graded_map_from_json<S>(iojson::field(j, "iota"), 0, r.big, r.small, "iota");
  r.pi = graded_map_from_json<S>(iojson::field(j, "pi"), 0, r.small, r.big, "pi");
  if (j.contains("eta"))
    r.eta = graded_map_from_json<S>(j.at("eta"), -1, r.big, r.big, "eta");
  if (j.contains("exempt"))
    for (const json& d : j.at("exempt"))
      r.exempt_degrees.insert(int(iojson::get_int(d, "exempt degree")));
  return r;
}

template <class S>
json retraction_to_json(const Retraction<S>& r) {
  json out{{"big", complex_to_json<S>(r.big)},
           {"small", complex_to_json<S>(r.small)},
           {"iota", graded_map_to_json<S>(r.iota)},
           {"pi", graded_map_to_json<S>(r.pi)},
           {"eta", graded_map_to_json<S>(r.eta)}};
  if (!r.exempt_degrees.empty()) {
    json ex = json::array();
    for (int d : r.exempt_degrees) ex.push_back(d);
    out["exempt"] = std::move(ex);
  }
  return out;
}

// {"delta": blocks} against the big complex of the retraction
template <class S>
Perturbation<S> perturbation_from_json(const json& j, const CochainComplex<S>& big) {
  Perturbation<S> p;
  const json& blocks = j.contains("delta") ? j.at("delta") : j;
  p.delta = graded_map_from_json<S>(blocks, +1, big, big, "delta");
  return p;
}

// Numeric matrices also accept entries written as rational strings, so one
// input file serves both scalar modes.
inline Mat<Cplx> numeric_matrix_from_json(const json& j) {
  try {
    return matrix_from_json<Cplx>(j);
  } catch (const SchemaError&) {
    Mat<Rat> m = matrix_from_json<Rat>(j);
    Mat<Cplx> c(m.rows, m.cols);
    for (int i = 0; i < m.rows; i++)
      for (int k = 0; k < m.cols; k++)
        c.at(i, k) = ScalarOps<Cplx>::from_rat(m.at(i, k));
    return c;
  }
}

// Operator family plus thresholds, parsed from the numeric wire format.
struct FamilyConfig {
  OperatorFamily<Cplx> fam;
  std::vector<double> thresholds;
};

// {"grid": {"type": "circle"|"interval", "n": .., ["lo", "hi"]},
//  "family": {"kind": "lattice_dirac"|"scalar"|"explicit", ...},
//  "thresholds": [..]}
FamilyConfig family_from_json(const json& j);

json axiom_report_to_json(const AxiomReport& rep);

json det_bundle_report(const DetLineBundle<Cplx>& bundle, const SectionReport<Cplx>& sec,
                       const OperatorFamily<Cplx>& fam);

std::string plot_csv(const DetLineBundle<Cplx>& bundle, const SectionReport<Cplx>& sec,
                     const OperatorFamily<Cplx>& fam);

// Report builders shared by the command line tool and the python module.
// Each returns a JSON object; reports that run checks carry a "pass" key.
json pfaffian_report(const json& matrix, bool exact, double tol);

// Observable complex at the given truncation (negative: use the matrix
// size), its cohomology, the exp(A) intertwiner check, and, when the
// truncation admits one, the retraction onto the determinant line.
json observables_report(const json& matrix, int truncation, bool exact, double tol);

// Input: {"retraction": {...}} plus an optional "perturbation" (or bare
// "delta") block. Verifies the axioms before and after transfer.
json hpl_transfer_report(const json& input, bool exact, double tol);

// Full bundle report for a family configuration; when plot is non-null it
// receives the CSV rendering of the section.
json family_bundle_report(const json& family, double tol, std::string* plot);

}  // namespace bvdet
