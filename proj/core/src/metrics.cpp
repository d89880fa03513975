#include "mainet/metrics.hpp"

#include "mainet/error.hpp"

namespace mainet::metrics {

MetricsReport compute_metrics(const Confusion& confusion) {
  const std::size_t n = confusion.size();
  if (n == 0) throw ShapeError("compute_metrics: empty confusion matrix");
  double total = 0.0, trace = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (confusion[r].size() != n) throw ShapeError("compute_metrics: matrix not square");
    for (std::size_t c = 0; c < n; ++c) {
      if (confusion[r][c] < 0.0) throw ConfigError("compute_metrics: negative count");
      total += confusion[r][c];
    }
    trace += confusion[r][r];
  }
  if (total == 0.0) throw ConfigError("compute_metrics: no samples");

  MetricsReport rep;
  rep.confusion = confusion;
  rep.accuracy = 100.0 * trace / total;

  double psum = 0.0, rsum = 0.0, fsum = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double tp = confusion[c][c];
    double fp = 0.0, fn = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (r != c) fp += confusion[r][c];
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (k != c) fn += confusion[c][k];
    }
    const double prec = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
    const double rec = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
    const double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    rep.class_precision.push_back(100.0 * prec);
    rep.class_recall.push_back(100.0 * rec);
    rep.class_f1.push_back(100.0 * f1);
    psum += prec;
    rsum += rec;
    fsum += f1;
  }
  rep.precision = 100.0 * psum / static_cast<double>(n);
  rep.recall = 100.0 * rsum / static_cast<double>(n);
  rep.f1 = 100.0 * fsum / static_cast<double>(n);
  return rep;
}

}  // namespace mainet::metrics
