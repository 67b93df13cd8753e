#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cag/autodiff/tensor.hpp"

namespace cag::ad {

class NonDeterministicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // Denominator floor for the relative error; keeps near-zero gradients
  // from turning rounding noise into large relative errors.
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

// Compares tape gradients of a scalar loss against central differences for
// every coordinate of every tensor in `params`. The loss closure must
// rebuild its graph from the current parameter values on each call.
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
                                  const GradCheckOptions& options = {});

// Single-input form: f(x) must be scalar valued.
GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  const GradCheckOptions& options = {});

std::string describe(const GradCheckReport& report);

}  // namespace cag::ad
