#include <doctest.h>

#include <cmath>

#include "amsps/encoders.hpp"
#include "generators.hpp"

using namespace amsps;
using amsps::testing::Gen;

namespace {

GruGate random_gate(Gen& g, Eigen::Index hidden, Eigen::Index embed) {
  return GruGate{g.matrix(hidden, embed), g.matrix(hidden, hidden), g.vector(hidden)};
}

GruParams random_gru(Gen& g, Eigen::Index hidden, Eigen::Index embed) {
  return GruParams{random_gate(g, hidden, embed), random_gate(g, hidden, embed), random_gate(g, hidden, embed)};
}

TextEncoderParams random_text(Gen& g, Eigen::Index vocab, Eigen::Index embed, Eigen::Index hidden) {
  return TextEncoderParams{g.matrix(vocab, embed), random_gru(g, hidden, embed), random_gru(g, hidden, embed)};
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar loops, no Eigen products.
std::vector<double> hand_gru(const std::vector<double>& x, const std::vector<double>& h, const GruParams& p) {
  const std::size_t H = h.size(), E = x.size();
  auto pre = [&](const GruGate& gate, const std::vector<double>& state, std::size_t i) {
    double s = gate.bias[static_cast<Eigen::Index>(i)];
    for (std::size_t k = 0; k < E; ++k) s += gate.input(i, k) * x[k];
    for (std::size_t k = 0; k < H; ++k) s += gate.recurrent(i, k) * state[k];
    return s;
  };
  std::vector<double> z(H), r(H), rh(H), out(H);
  for (std::size_t i = 0; i < H; ++i) {
    z[i] = sig(pre(p.update, h, i));
    r[i] = sig(pre(p.reset, h, i));
    rh[i] = r[i] * h[i];
  }
  for (std::size_t i = 0; i < H; ++i) {
    const double cand = std::tanh(pre(p.candidate, rh, i));
    out[i] = (1 - z[i]) * h[i] + z[i] * cand;
  }
  return out;
}

}  // namespace

TEST_CASE("encode_image zero weights give the normalized bias") {
  ImageEncoderParams p{Matrix::Zero(3, 2), Vector(2)};
  p.bias << 3, 4;
  Gen g(1);
  Matrix out = encode_image(g.matrix(5, 3), p);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    CHECK(out(i, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(out(i, 1) == doctest::Approx(0.8).epsilon(1e-15));
  }
}

TEST_CASE("encode_image identity and hand arithmetic") {
  ImageEncoderParams p{Matrix::Identity(2, 2), Vector::Zero(2)};
  Matrix f(2, 2);
  f << 1, 0, 1, 2;
  Matrix out = encode_image(f, p);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 0.0);
  CHECK(std::abs(out(1, 0) - 1.0 / std::sqrt(5.0)) <= 1e-15);
  CHECK(std::abs(out(1, 1) - 2.0 / std::sqrt(5.0)) <= 1e-15);
  CHECK(std::abs(out(1, 0) - 0.4472) < 5e-5);
  CHECK(std::abs(out(1, 1) - 0.8944) < 5e-5);
}

TEST_CASE("encode_image shape mismatch") {
  ImageEncoderParams p{Matrix::Identity(2, 2), Vector::Zero(2)};
  CHECK_THROWS_AS(encode_image(Matrix::Ones(2, 3), p), Error);
}

TEST_CASE("encode_text rejects empty and out-of-vocabulary sequences") {
  Gen g(2);
  auto p = random_text(g, 5, 3, 4);
  CHECK_THROWS_AS(encode_text({}, p), Error);
  CHECK_THROWS_AS(encode_text({5}, p), Error);
  CHECK_THROWS_AS(encode_text({-1}, p), Error);
}

TEST_CASE("zero GRU weights leave zero states and normalization fails") {
  Gen g(3);
  auto p = random_text(g, 5, 3, 4);
  p.forward = zeros_like(p.forward);
  p.backward = zeros_like(p.backward);
  try {
    encode_text({0, 1, 2}, p);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Numeric);
  }
}

TEST_CASE("single-token sequence is the mean of two single steps") {
  Gen g(4);
  auto p = random_text(g, 6, 3, 4);
  Matrix out = encode_text({2}, p);
  Vector x = p.embedding.row(2).transpose();
  Vector zero = Vector::Zero(4);
  Vector mean = 0.5 * (gru_step(x, zero, p.forward) + gru_step(x, zero, p.backward));
  CHECK((out.row(0).transpose() - mean / mean.norm()).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("gru carry case") {
  Gen g(5);
  auto p = random_gru(g, 3, 2);
  p.update.bias.setConstant(-1e3);
  Vector h = g.vector(3);
  CHECK((gru_step(g.vector(2), h, p) - h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gru reset case") {
  Gen g(6);
  auto p = random_gru(g, 3, 2);
  p.update.bias.setConstant(1e3);
  Vector x = g.vector(2);
  Vector expected = (p.candidate.input * x + p.candidate.bias).array().tanh();
  CHECK((gru_step(x, Vector::Zero(3), p) - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gru_step matches a hand recurrence") {
  Gen g(7);
  for (int t = 0; t < 50; ++t) {
    auto p = random_gru(g, 3, 3);
    Vector x = g.vector(3), h = g.vector(3);
    Vector got = gru_step(x, h, p);
    auto want = hand_gru({x[0], x[1], x[2]}, {h[0], h[1], h[2]}, p);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(got[i] - want[static_cast<std::size_t>(i)]) <= 1e-12);
  }
  auto p = random_gru(g, 3, 3);
  CHECK_THROWS_AS(gru_step(Vector::Zero(2), Vector::Zero(3), p), Error);
  CHECK_THROWS_AS(gru_step(Vector::Zero(3), Vector::Zero(4), p), Error);
}

TEST_CASE("encoder rows are unit length") {
  Gen g(8);
  for (int t = 0; t < 20; ++t) {
    ImageEncoderParams ip{g.matrix(6, 5), g.vector(5)};
    Matrix v = encode_image(g.matrix(g.between(1, 9), 6), ip);
    auto tp = random_text(g, 10, 4, 5);
    Matrix s = encode_text(g.tokens(g.between(1, 8), 10), tp);
    for (Eigen::Index i = 0; i < v.rows(); ++i) CHECK(std::abs(v.row(i).norm() - 1.0) <= 1e-12);
    for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(std::abs(s.row(i).norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("encode_text is reversal covariant") {
  Gen g(9);
  for (int t = 0; t < 20; ++t) {
    auto p = random_text(g, 10, 4, 5);
    auto tokens = g.tokens(g.between(1, 9), 10);
    auto swapped = p;
    std::swap(swapped.forward, swapped.backward);
    std::vector<int> reversed(tokens.rbegin(), tokens.rend());
    Matrix a = encode_text(tokens, p);
    Matrix b = encode_text(reversed, swapped);
    CHECK((a - b.colwise().reverse()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("encode_text gradient of sum(T) matches finite differences") {
  Gen g(10);
  auto p = random_text(g, 7, 3, 4);
  const std::vector<int> tokens = {1, 4, 2};
  auto enc = encode_text_cached(tokens, p);
  auto grads = zeros_like(p);
  encode_text_backward(enc, Matrix::Ones(3, 4), p, grads);

  auto check = [&](const std::string& name, Matrix& slot, const Matrix& grad) {
    const Matrix base = slot;
    auto f = [&](const Matrix& m) {
      slot = m;
      const double s = encode_text(tokens, p).sum();
      slot = base;
      return s;
    };
    auto report = finite_diff_check(name, f, base, grad, 3e-5);
    CHECK_MESSAGE(report.max_rel_error < 1e-4, name);
  };
  check("embedding", p.embedding, grads.embedding);
  check("forward.update.input", p.forward.update.input, grads.forward.update.input);
  check("forward.reset.recurrent", p.forward.reset.recurrent, grads.forward.reset.recurrent);
  check("backward.candidate.input", p.backward.candidate.input, grads.backward.candidate.input);
  check("backward.candidate.recurrent", p.backward.candidate.recurrent, grads.backward.candidate.recurrent);
}

TEST_CASE("encode_image gradient matches finite differences") {
  Gen g(11);
  ImageEncoderParams p{g.matrix(4, 3), g.vector(3)};
  Matrix f = g.matrix(5, 4);
  Matrix w = g.matrix(5, 3);
  auto enc = encode_image_cached(f, p);
  auto grads = zeros_like(p);
  encode_image_backward(f, enc, w, grads);
  const Matrix base = p.weight;
  auto fn = [&](const Matrix& m) {
    p.weight = m;
    const double s = encode_image(f, p).cwiseProduct(w).sum();
    p.weight = base;
    return s;
  };
  CHECK(finite_diff_check("image.weight", fn, base, grads.weight, 3e-5).max_rel_error < 1e-4);
}
