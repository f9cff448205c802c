#include "amsps/optimizer.hpp"

#include <cmath>

namespace amsps {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw Error(ErrorCategory::Usage, "unknown optimizer '" + name + "' (expected adam or sgd)");
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

ModelState make_state(ModelParams params) {
  ModelState s;
  s.first_moment = zeros_like(params);
  s.second_moment = zeros_like(params);
  s.params = std::move(params);
  return s;
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t step, double lr, const AdamOptions& opts) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw Error(ErrorCategory::Shape, "adam_update: parameter, gradient and moment sizes differ");
  }
  if (step == 0) throw Error(ErrorCategory::Usage, "adam_update: step is 1-based");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(opts.beta1, t);
  const double c2 = 1.0 - std::pow(opts.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * grad[i];
    v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + opts.eps);
  }
}

double global_norm(const ModelParams& grads) {
  double sq = 0;
  for (const auto& t : tensors(const_cast<ModelParams&>(grads))) {
    for (Eigen::Index i = 0; i < t.size(); ++i) sq += t.data[i] * t.data[i];
  }
  return std::sqrt(sq);
}

double clip_global_norm(ModelParams& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& t : tensors(grads)) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] *= scale;
    }
  }
  return norm;
}

void optimizer_step(ModelState& state, const ModelParams& grads, double lr, OptimizerKind kind,
                    const AdamOptions& opts) {
  auto p = tensors(state.params);
  auto g = tensors(const_cast<ModelParams&>(grads));
  auto m = tensors(state.first_moment);
  auto v = tensors(state.second_moment);
  if (g.size() != p.size()) throw Error(ErrorCategory::Shape, "optimizer_step: gradient tensor count differs");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i].rows != p[i].rows || g[i].cols != p[i].cols) {
      throw Error(ErrorCategory::Shape, "optimizer_step: gradient for " + p[i].name + " has shape " +
                                            std::to_string(g[i].rows) + "x" + std::to_string(g[i].cols) +
                                            ", parameter is " + std::to_string(p[i].rows) + "x" +
                                            std::to_string(p[i].cols));
    }
  }
  ++state.step;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto n = static_cast<std::size_t>(p[i].size());
    std::span<double> param(p[i].data, n);
    std::span<const double> grad(g[i].data, n);
    if (kind == OptimizerKind::Adam) {
      adam_update(param, grad, {m[i].data, n}, {v[i].data, n}, state.step, lr, opts);
    } else {
      for (std::size_t j = 0; j < n; ++j) param[j] -= lr * grad[j];
    }
  }
  if (!all_finite(state.params) || !all_finite(state.first_moment) || !all_finite(state.second_moment)) {
    throw Error(ErrorCategory::Numeric, "optimizer_step: non-finite parameter after step " +
                                            std::to_string(state.step));
  }
}

}  // namespace amsps
