#pragma once

#include <string>
#include <vector>

namespace moltailor {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured quantity (error, residual, ...)
  double threshold = 0.0;  // pass bound on value
  std::string detail;
};

// Central-difference gradient checks of every tensor primitive, `seeds`
// random shapes each; value = worst relative error.
std::vector<CheckResult> primitive_gradient_checks(int seeds = 10, double tolerance = 1e-4);

// TEB, MHA*, MT-block and the end-to-end toy model, `seeds` each.
std::vector<CheckResult> block_gradient_checks(int seeds = 10, double tolerance = 1e-4);

// Hybrid attention identity over `configs` random configurations.
std::vector<CheckResult> decomposition_checks(int configs = 100);

// Masked-MSE hand example and masked-gradient zeros over `batches` batches.
std::vector<CheckResult> loss_checks(int batches = 50);

// ROC-AUC / AP brute-force agreement, delta-AP and normalized RMSE examples.
std::vector<CheckResult> metric_checks(int cases = 10000);

// Canonical SMILES and descriptor vectors under atom renumbering.
std::vector<CheckResult> canonicalization_checks(const std::vector<std::string>& smiles, int permutations = 50);

// Everything above with default sizes; the molecule list is the bundled test
// set when `smiles` is empty.
std::vector<CheckResult> run_selfcheck(const std::vector<std::string>& smiles = {});

std::string format_check_table(const std::vector<CheckResult>& results);

}  // namespace moltailor
