#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "amsps/model.hpp"
#include "amsps/optimizer.hpp"

using namespace amsps;

namespace {

ModelParams small_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init_model(ModelDims{6, 4, 3, 9}, rng);
}

ModelParams filled(const ModelParams& like, double value) {
  ModelParams g = zeros_like(like);
  for (auto& t : tensors(g)) std::fill(t.data, t.data + t.size(), value);
  return g;
}

bool same_values(ModelParams a, ModelParams b) {
  auto ta = tensors(a), tb = tensors(b);
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!std::equal(ta[i].data, ta[i].data + ta[i].size(), tb[i].data)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("tensor listing is stable and complete") {
  auto p = small_model(1);
  auto ts = tensors(p);
  CHECK(ts.front().name == "image.weight");
  std::size_t total = 0;
  for (const auto& t : ts) {
    CHECK(t.data != nullptr);
    total += static_cast<std::size_t>(t.size());
  }
  CHECK(total == parameter_count(p));
  auto q = small_model(1);
  auto tq = tensors(q);
  REQUIRE(tq.size() == ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) CHECK(tq[i].name == ts[i].name);
  CHECK(same_values(p, q));
  CHECK_FALSE(same_values(p, small_model(2)));
}

TEST_CASE("zero gradients and zero learning rate leave parameters alone") {
  for (auto kind : {OptimizerKind::Adam, OptimizerKind::Sgd}) {
    auto state = make_state(small_model(3));
    const auto before = state.params;
    optimizer_step(state, zeros_like(state.params), 0.1, kind);
    CHECK(same_values(state.params, before));
    CHECK(state.step == 1);
    optimizer_step(state, filled(state.params, 0.7), 0.0, kind);
    CHECK(same_values(state.params, before));
  }
}

TEST_CASE("adam matches a hand iteration on one scalar") {
  double p = 1.0, m = 0.0, v = 0.0;
  const double g = 0.5, lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> param = {1.0}, grad = {0.5}, mm = {0.0}, vv = {0.0};
  for (std::uint64_t t = 1; t <= 25; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1 - std::pow(b2, static_cast<double>(t)));
    p -= lr * mhat / (std::sqrt(vhat) + eps);
    adam_update(param, grad, mm, vv, t, lr);
    CHECK(std::abs(param[0] - p) <= 1e-14);
    CHECK(std::abs(mm[0] - m) <= 1e-15);
    CHECK(std::abs(vv[0] - v) <= 1e-15);
  }
  // Constant gradient: every bias-corrected step is lr·g/(|g| + eps).
  CHECK(std::abs(p - (1.0 - 25 * lr * g / (g + eps))) <= 1e-12);
}

TEST_CASE("sgd step") {
  auto state = make_state(small_model(4));
  const auto before = state.params;
  optimizer_step(state, filled(state.params, 2.0), 0.25, OptimizerKind::Sgd);
  auto a = tensors(state.params);
  auto before_copy = before;
  auto b = tensors(before_copy);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < a[i].size(); ++j) CHECK(a[i].data[j] == b[i].data[j] - 0.5);
  }
}

TEST_CASE("optimizer rejects mismatched and non-finite updates") {
  auto state = make_state(small_model(5));
  auto wrong = zeros_like(small_model(5));
  wrong.text.embedding = Matrix::Zero(2, 2);
  try {
    optimizer_step(state, wrong, 0.1);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Shape);
    CHECK(std::string(e.what()).find("text.embedding") != std::string::npos);
  }
  auto nan = filled(state.params, std::nan(""));
  CHECK_THROWS_AS(optimizer_step(state, nan, 0.1, OptimizerKind::Sgd), Error);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), Error);
  CHECK(parse_optimizer("sgd") == OptimizerKind::Sgd);
}

TEST_CASE("global norm clipping") {
  auto g = filled(small_model(6), 1.0);
  const double n = std::sqrt(static_cast<double>(parameter_count(g)));
  CHECK(std::abs(global_norm(g) - n) <= 1e-12);
  CHECK(std::abs(clip_global_norm(g, 2.0) - n) <= 1e-12);
  CHECK(std::abs(global_norm(g) - 2.0) <= 1e-12);
  const auto kept = g;
  clip_global_norm(g, 5.0);
  CHECK(same_values(g, kept));
  clip_global_norm(g, 0.0);
  CHECK(same_values(g, kept));
}
