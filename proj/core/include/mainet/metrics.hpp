#pragma once

#include <vector>

namespace mainet::metrics {

/// Confusion matrix convention: rows = actual class, columns = predicted.
using Confusion = std::vector<std::vector<double>>;

struct MetricsReport {
  Confusion confusion;
  double accuracy = 0.0;   // trace/total, as a percentage
  double precision = 0.0;  // macro average over one-vs-rest classes, percent
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<double> class_precision;  // percentages
  std::vector<double> class_recall;
  std::vector<double> class_f1;
};

/// One-vs-rest per-class precision/recall/F1 plus overall accuracy, macro
/// averaged, in percent. A zero denominator yields 0 for that class's metric
/// so reports never contain NaN.
MetricsReport compute_metrics(const Confusion& confusion);

}  // namespace mainet::metrics
