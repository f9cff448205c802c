#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "amsps/model.hpp"

namespace amsps {

enum class OptimizerKind { Adam, Sgd };

OptimizerKind parse_optimizer(const std::string& name);
const char* to_string(OptimizerKind kind);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Parameters, moment estimates and counters owned by the training loop.
struct ModelState {
  ModelParams params;
  ModelParams first_moment;
  ModelParams second_moment;
  std::uint64_t step = 0;   // optimizer updates applied so far
  std::uint64_t epoch = 0;  // epochs completed in the current phase
  int phase = 1;
};

ModelState make_state(ModelParams params);

/// One bias-corrected Adam update over a flat range; `step` is 1-based.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t step, double lr, const AdamOptions& opts = {});

double global_norm(const ModelParams& grads);
/// Rescales `grads` in place when their global norm exceeds `max_norm`
/// (no-op for max_norm <= 0). Returns the norm before clipping.
double clip_global_norm(ModelParams& grads, double max_norm);

/// Increments state.step, updates every tensor, then checks finiteness.
void optimizer_step(ModelState& state, const ModelParams& grads, double lr, OptimizerKind kind = OptimizerKind::Adam,
                    const AdamOptions& opts = {});

}  // namespace amsps
