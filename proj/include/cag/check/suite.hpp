#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cag/autodiff/gradcheck.hpp"

namespace cag::check {

struct SuiteCase {
  std::string name;
  ad::GradCheckReport report;
};

struct SuiteResult {
  std::vector<SuiteCase> cases;
  bool passed() const;
  std::size_t checked() const;
};

// Finite-difference check of every differentiable op, the three losses and
// the tiny two-stream network (5-joint tree, 8 frames, widths 4/8).
SuiteResult run_gradient_suite(const ad::GradCheckOptions& options = {});

}  // namespace cag::check
