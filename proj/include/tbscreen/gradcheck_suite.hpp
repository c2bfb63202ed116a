#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tbscreen {

struct GradCheckCase {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_error < tolerance; }
};

/// Central-difference checks of every differentiable op at `points` random
/// points each, plus end-to-end checks of a tiny capsule network and tiny
/// baselines.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 7, std::size_t points = 10);

}  // namespace tbscreen
