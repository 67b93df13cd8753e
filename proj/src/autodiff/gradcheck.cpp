#include "cag/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cag/autodiff/tape.hpp"

namespace cag::ad {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  const Tensor value = loss();
  if (value.numel() != 1) throw ShapeError("gradient check needs a scalar loss, got " + shape_str(value.shape()));
  return value.item();
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
                                  const GradCheckOptions& options) {
  if (!(options.h > 0.0)) throw std::invalid_argument("finite_diff_check: step h must be positive");

  std::vector<Tensor> targets = params;
  std::vector<bool> previous;
  for (Tensor& p : targets) {
    previous.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    TapeScope scope;
    const Tensor value = loss();
    backward(value);
    for (const Tensor& p : targets) analytic.push_back(p.grad());
  }

  const double base = evaluate(loss);
  const double again = evaluate(loss);
  if (base != again) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "finite_diff_check: loss is not deterministic (" << base << " vs " << again << ")";
    throw NonDeterministicError(msg.str());
  }

  GradCheckReport report;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto values = targets[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.h;
      const double plus = evaluate(loss);
      values[i] = saved - options.h;
      const double minus = evaluate(loss);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.h);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst_tensor = t;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tol;

  for (std::size_t t = 0; t < targets.size(); ++t) {
    targets[t].zero_grad();
    targets[t].set_requires_grad(previous[t]);
  }
  return report;
}

GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  const GradCheckOptions& options) {
  return finite_diff_check([&]() { return f(x); }, {x}, options);
}

std::string describe(const GradCheckReport& report) {
  std::ostringstream out;
  out.precision(3);
  out << (report.passed ? "ok" : "FAILED") << " max_rel_err=" << std::scientific << report.max_rel_error
      << " coords=" << report.checked << " worst=(" << report.worst_tensor << "," << report.worst_index
      << ") analytic=" << report.worst_analytic << " numeric=" << report.worst_numeric;
  return out.str();
}

}  // namespace cag::ad
