#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "bvdet/acceptance.hpp"
#include "bvdet/io_json.hpp"

namespace {

using namespace bvdet;

// Exit codes: 0 all checks pass, 1 a computed report fails its checks,
// 2 the input could not be loaded or validated.
constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitBadInput = 2;

struct Options {
  std::string mode = "exact";
  bool mode_explicit = false;
  double tol = 1e-9;
  std::uint64_t seed = 20240915;
  std::string out;

  bool exact() const { return mode == "exact"; }
};

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path);
  return json::parse(in);
}

void emit(const Options& o, const json& report) {
  std::string text = report.dump(2);
  text.push_back('\n');
  if (o.out.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw SchemaError("cannot write " + o.out);
  f << text;
}

// Emits the report and turns its verdict into the process exit code.
int emit_checked(const Options& o, const json& report) {
  emit(o, report);
  return report.value("pass", true) ? kExitOk : kExitCheckFailed;
}

int cmd_pfaffian(const Options& o, const std::string& matrix_path) {
  return emit_checked(o, pfaffian_report(load_json_file(matrix_path), o.exact(), o.tol));
}

int cmd_bv_cohomology(const Options& o, const std::string& matrix_path, int trunc) {
  return emit_checked(
      o, observables_report(load_json_file(matrix_path), trunc, o.exact(), o.tol));
}

int cmd_hpl_check(const Options& o, const std::string& input_path) {
  return emit_checked(o, hpl_transfer_report(load_json_file(input_path), o.exact(), o.tol));
}

int cmd_det_bundle(const Options& o, const std::string& family_path,
                   const std::string& plot_path) {
  if (o.mode_explicit && o.exact())
    throw InvalidInput(
        "det-bundle works with numeric spectra; rerun with --mode numeric");
  std::string plot;
  json report = family_bundle_report(load_json_file(family_path), o.tol,
                                     plot_path.empty() ? nullptr : &plot);
  if (!plot_path.empty()) {
    std::ofstream f(plot_path, std::ios::binary);
    if (!f) throw SchemaError("cannot write " + plot_path);
    f << plot;
  }
  return emit_checked(o, report);
}

int cmd_verify_all(const Options& o) {
  AcceptanceReport rep = run_acceptance(o.seed);
  for (const CriterionResult& c : rep.results)
    std::fprintf(stderr, "%-34s %6.2fs %s\n", c.key.c_str(), c.seconds,
                 c.pass ? "pass" : "FAIL");
  emit(o, rep.to_json());
  return rep.ok() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"finite dimensional models of determinant lines"};
  app.require_subcommand(1);

  Options o;
  CLI::Option* mode_opt =
      app.add_option("--mode", o.mode, "scalar field: exact rationals or numeric doubles")
          ->check(CLI::IsMember({"exact", "numeric"}));
  app.add_option("--tol", o.tol, "tolerance for numeric checks");
  app.add_option("--seed", o.seed, "seed for the randomized battery");
  app.add_option("--out", o.out, "write the JSON report to this file instead of stdout");

  std::string matrix_path, input_path, family_path, plot_path;
  int trunc = -1;

  CLI::App* pf = app.add_subcommand("pfaffian", "Pfaffian of a skew form");
  pf->fallthrough();
  pf->add_option("--matrix", matrix_path, "JSON file holding the skew matrix")->required();

  CLI::App* bv = app.add_subcommand(
      "bv-cohomology", "observable complex, its cohomology, and the exp(A) intertwiner");
  bv->fallthrough();
  bv->add_option("--matrix", matrix_path, "JSON file holding the skew matrix")->required();
  bv->add_option("--truncation", trunc, "symmetric truncation order (default: matrix size)");

  CLI::App* hpl = app.add_subcommand(
      "hpl-check", "transfer a perturbation across a deformation retraction");
  hpl->fallthrough();
  hpl->add_option("--input", input_path, "JSON file with retraction and perturbation")
      ->required();

  CLI::App* db = app.add_subcommand(
      "det-bundle", "determinant line bundle of an operator family");
  db->fallthrough();
  db->add_option("--family", family_path, "JSON file describing grid, family, thresholds")
      ->required();
  db->add_option("--emit-plot", plot_path, "also write a CSV of the section values");

  CLI::App* va = app.add_subcommand("verify-all", "run the full acceptance battery");
  va->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadInput;
  }
  o.mode_explicit = mode_opt->count() > 0;

  auto t0 = std::chrono::steady_clock::now();
  int rc = kExitBadInput;
  const char* name = "";
  try {
    if (pf->parsed()) {
      name = "pfaffian";
      rc = cmd_pfaffian(o, matrix_path);
    } else if (bv->parsed()) {
      name = "bv-cohomology";
      rc = cmd_bv_cohomology(o, matrix_path, trunc);
    } else if (hpl->parsed()) {
      name = "hpl-check";
      rc = cmd_hpl_check(o, input_path);
    } else if (db->parsed()) {
      name = "det-bundle";
      rc = cmd_det_bundle(o, family_path, plot_path);
    } else if (va->parsed()) {
      name = "verify-all";
      rc = cmd_verify_all(o);
    }
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitBadInput;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitBadInput;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadInput;
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "%s: %.2fs\n", name, secs);
  return rc;
}
