#pragma once

#include <vector>

namespace multifuse {

// Confusion counts and derived rates with label 1 (dementia) as the positive
// class. Ratios with a zero denominator are reported as 0 with the
// corresponding defined flag cleared.
struct Metrics {
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double specificity = 0;
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
  bool specificity_defined = true;
};

Metrics evaluate_metrics(const std::vector<int>& predictions, const std::vector<int>& truth);

}  // namespace multifuse
