#include <pybind11/pybind11.h>

#include <cstdint>
#include <string>

#include "bvdet/acceptance.hpp"
#include "bvdet/io_json.hpp"

namespace py = pybind11;

namespace {

using namespace bvdet;

bool exact_mode(const std::string& mode) {
  if (mode == "exact") return true;
  if (mode == "numeric") return false;
  throw InvalidInput("mode must be \"exact\" or \"numeric\"");
}

}  // namespace

// Structured arguments and results cross the boundary as JSON text; the
// python package wraps these with dict-based helpers.
PYBIND11_MODULE(_bvdet, m) {
  m.doc() = "finite dimensional models of determinant lines";
  m.attr("__version__") = "0.1.0";

  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<json::exception>(m, "JsonError", PyExc_ValueError);

  m.def(
      "pfaffian",
      [](const std::string& matrix, const std::string& mode, double tol) {
        return pfaffian_report(json::parse(matrix), exact_mode(mode), tol).dump();
      },
      py::arg("matrix"), py::arg("mode") = "exact", py::arg("tol") = 1e-9,
      "Pfaffian of a skew matrix.");

  m.def(
      "bv_cohomology",
      [](const std::string& matrix, int truncation, const std::string& mode, double tol) {
        return observables_report(json::parse(matrix), truncation, exact_mode(mode), tol)
            .dump();
      },
      py::arg("matrix"), py::arg("truncation") = -1, py::arg("mode") = "exact",
      py::arg("tol") = 1e-9,
      "Observable complex report for a skew matrix.");

  m.def(
      "hpl_check",
      [](const std::string& input, const std::string& mode, double tol) {
        return hpl_transfer_report(json::parse(input), exact_mode(mode), tol).dump();
      },
      py::arg("input"), py::arg("mode") = "exact", py::arg("tol") = 1e-9,
      "Transfer a perturbation across a deformation retraction.");

  m.def(
      "det_bundle",
      [](const std::string& family, double tol, bool with_plot) {
        std::string plot;
        json rep = family_bundle_report(json::parse(family), tol,
                                        with_plot ? &plot : nullptr);
        if (with_plot) rep["plot_csv"] = plot;
        return rep.dump();
      },
      py::arg("family"), py::arg("tol") = 1e-9, py::arg("with_plot") = false,
      "Determinant line bundle report for an operator family.");

  m.def(
      "spectral_flow",
      [](const std::string& family) {
        json cfg = json::parse(family);
        if (!cfg.contains("thresholds")) cfg["thresholds"] = json::array({1.0});
        return spectral_flow(family_from_json(cfg).fam);
      },
      py::arg("family"),
      "Net signed count of eigenvalue crossings through zero around the family.");

  m.def(
      "verify_all",
      [](std::uint64_t seed) { return run_acceptance(seed).to_json().dump(); },
      py::arg("seed") = 20240915,
      "Run the full acceptance battery (slow).");
}
