#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aimdit/model.hpp"

namespace aimdit {

struct GradcheckOptions {
  ModelConfig model = tiny_model();
  std::size_t batch = 2;
  std::size_t max_len = 4;
  std::uint64_t seed = 7;
  double eps = 1e-5;
  double tolerance = 1e-4;
  // Negative control: scale the named primitive's backward contributions.
  std::string fault_op;
  double fault_scale = 1.0;

  static ModelConfig tiny_model();
  // Refuses configurations beyond d <= 8, T <= 4, batch <= 2.
  void validate() const;
};

struct GroupCheck {
  std::string group;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GroupCheck> groups;
  bool passed = true;
  double seconds = 0.0;
};

// |analytic - numeric| / max(|analytic|, |numeric|, kGradcheckFloor)
inline constexpr double kGradcheckFloor = 1e-6;
double gradcheck_relative_error(double analytic, double numeric);

// Central differences in double precision over every entry of every
// parameter of a densely initialized tiny model on random inputs.
GradcheckReport run_gradcheck(const GradcheckOptions& opts);

}  // namespace aimdit
