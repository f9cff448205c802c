#include "amsps/numerics.hpp"

#include <algorithm>

namespace amsps {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const std::string& op_name, const std::function<double(const Matrix&)>& f,
                                  const Matrix& params, const Matrix& analytic_grad, double eps) {
  require_same_shape(params, analytic_grad, "finite_diff_check");
  if (!(eps >= 1e-6 && eps <= 1e-4)) {
    throw Error(ErrorCategory::Data, "finite_diff_check: eps must lie in [1e-6, 1e-4]");
  }
  GradCheckReport report;
  report.op_name = op_name;
  report.per_parameter_errors.reserve(static_cast<std::size_t>(params.size()));
  Matrix probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + eps;
    const double plus = f(probe);
    probe.data()[i] = saved - eps;
    const double minus = f(probe);
    probe.data()[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw Error(ErrorCategory::Numeric,
                  op_name + ": non-finite function value when perturbing index " + std::to_string(i));
    }
    GradCheckEntry e;
    e.index = i;
    e.analytic = analytic_grad.data()[i];
    e.numeric = (plus - minus) / (2 * eps);
    e.rel_error = relative_error(e.analytic, e.numeric);
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.per_parameter_errors.push_back(e);
  }
  return report;
}

}  // namespace amsps
