#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bvdet/io_json.hpp"

namespace bvdet {

// One entry of the verification battery. The key doubles as the report
// field name; residual is the worst deviation seen (0 for exact suites that
// compare scalars for equality).
struct CriterionResult {
  std::string key;
  std::string title;
  bool pass = false;
  double max_residual = 0;
  json details = json::object();
  double seconds = 0;  // wall time; reported on stderr, kept out of the JSON
};

struct AcceptanceReport {
  uint64_t seed = 0;
  std::vector<CriterionResult> results;

  bool ok() const {
    for (auto& r : results)
      if (!r.pass) return false;
    return true;
  }
  json to_json() const;
};

// Runs the whole battery; every criterion executes even after a failure so
// the report is complete.
AcceptanceReport run_acceptance(uint64_t seed);

}  // namespace bvdet
