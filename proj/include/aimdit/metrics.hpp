#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

namespace aimdit {

struct MetricsReport {
  std::size_t classes = 0;
  double accuracy = 0.0;  // Acc-7 for seven classes
  double weighted_f1 = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> per_class_f1;
  std::vector<std::size_t> support;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;

  nlohmann::json to_json() const;
};

// F1 is 0 for a class whose precision or recall is undefined.
MetricsReport compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels, std::size_t classes);

}  // namespace aimdit
