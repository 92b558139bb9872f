#include "aimdit/metrics.hpp"

#include <string>

#include "aimdit/error.hpp"

namespace aimdit {

MetricsReport compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels, std::size_t classes) {
  if (preds.empty()) fail(ErrorCode::kDimension, "metrics over an empty prediction set");
  if (preds.size() != labels.size()) {
    fail(ErrorCode::kDimension, std::to_string(preds.size()) + " predictions for " + std::to_string(labels.size()) +
                                    " labels");
  }
  if (classes < 1) fail(ErrorCode::kConfig, "metrics need at least one class");
  MetricsReport r;
  r.classes = classes;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (int v : {preds[i], labels[i]}) {
      if (v < 0 || static_cast<std::size_t>(v) >= classes) {
        fail(ErrorCode::kLabelRange, "class index " + std::to_string(v) + " outside [0," +
                                         std::to_string(classes) + ")");
      }
    }
    ++r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])];
  }

  const double n = static_cast<double>(preds.size());
  std::size_t correct = 0;
  r.precision.assign(classes, 0.0);
  r.recall.assign(classes, 0.0);
  r.per_class_f1.assign(classes, 0.0);
  r.support.assign(classes, 0);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t tp = r.confusion[c][c];
    std::size_t predicted = 0;
    for (std::size_t t = 0; t < classes; ++t) {
      predicted += r.confusion[t][c];
      r.support[c] += r.confusion[c][t];
    }
    correct += tp;
    const double p = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double q = r.support[c] ? static_cast<double>(tp) / static_cast<double>(r.support[c]) : 0.0;
    r.precision[c] = p;
    r.recall[c] = q;
    r.per_class_f1[c] = (p + q) > 0.0 ? 2.0 * p * q / (p + q) : 0.0;
    r.weighted_f1 += static_cast<double>(r.support[c]) * r.per_class_f1[c];
  }
  r.weighted_f1 /= n;
  r.accuracy = static_cast<double>(correct) / n;
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"classes", classes},         {"accuracy", accuracy}, {"weighted_f1", weighted_f1},
          {"precision", precision},     {"recall", recall},     {"per_class_f1", per_class_f1},
          {"support", support},         {"confusion", confusion}};
}

}  // namespace aimdit
