#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moltailor/error.h"

namespace moltailor {

class DegenerateLabels : public Error {
 public:
  using Error::Error;
};

class NoPositives : public Error {
 public:
  using Error::Error;
};

// Empty mask means every entry counts. Labels are 0/1.
// P(random positive outranks random negative), ties count 1/2.
double roc_auc(std::span<const double> scores, std::span<const int> labels, std::span<const std::uint8_t> mask = {});

// Sum over descending unique thresholds of precision * recall increment.
double average_precision(std::span<const double> scores, std::span<const int> labels,
                         std::span<const std::uint8_t> mask = {});

// Column-major view helper: n rows x t columns, row-major storage.
struct LabelMatrix {
  int rows = 0, cols = 0;
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::uint8_t> mask;  // empty = all valid
};

struct MultiMetric {
  double value = 0.0;
  std::vector<int> used_columns;
  std::vector<std::string> warnings;  // one per excluded column
};

// Unweighted mean of per-column ROC-AUC; single-class columns are excluded
// with a warning. Throws DegenerateLabels when no column is usable.
MultiMetric roc_auc_multi(const LabelMatrix& m);

// Mean over columns of AP minus the masked base rate. Columns without a
// positive are excluded with a warning; throws NoPositives when none is left.
MultiMetric delta_ap(const LabelMatrix& m);

double rmse(std::span<const double> pred, std::span<const double> target);
double mae(std::span<const double> pred, std::span<const double> target);

// (x - mean) / population std across methods; all zeros when the values are
// identical. Needs at least two values.
std::vector<double> normalized_rmse(std::span<const double> rmses);

}  // namespace moltailor
