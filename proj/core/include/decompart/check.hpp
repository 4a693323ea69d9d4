#pragma once

#include <string>
#include <vector>

#include "decompart/model_io.hpp"

namespace decompart {

struct CheckOptions {
  double t_end = 5.0;
  double rtol = 1e-8;
  double atol = 1e-10;
  int cycles = 8;       // unroll depth for exhaustiveness / path-formula suites
  int grid_points = 51;
  int max_threads = 0;  // 0 = DECOMPART_THREADS or hardware default
};

struct CheckResult {
  std::string name;
  bool pass = true;
  std::string detail;
};

/// Runs every invariant suite applicable to the document (dynamic suites for
/// models, static suites for static blocks). Suites are independent and fan
/// out across threads, capped by DECOMPART_THREADS.
std::vector<CheckResult> run_model_checks(const LoadedDocument& doc,
                                          const CheckOptions& opts = {});

bool all_pass(const std::vector<CheckResult>& results);

}  // namespace decompart
