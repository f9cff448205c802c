#include <doctest.h>

#include <cmath>

#include "amsps/consensus.hpp"
#include "generators.hpp"

using namespace amsps;
using amsps::testing::Gen;

namespace {

CorpusEmbedding random_corpus(Gen& g, Eigen::Index z, Eigen::Index d) {
  CorpusEmbedding c{g.unit_rows(z, d), {}};
  for (Eigen::Index i = 0; i < z; ++i) c.names.push_back("c" + std::to_string(i));
  return c;
}

ConsensusHeadParams random_head(Gen& g, Eigen::Index d) {
  return ConsensusHeadParams{g.matrix(d, d), g.matrix(d, d), g.vector(2 * d), g.vector(1), g.vector(3)};
}

double max_abs(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("self_attention_pool trivial cases") {
  Gen g(1);
  Matrix one = g.unit_rows(1, 4);
  CHECK(max_abs(self_attention_pool(one, 10.0), one.row(0).transpose()) <= 1e-15);
  Matrix same(3, 4);
  for (int i = 0; i < 3; ++i) same.row(i) = one.row(0);
  CHECK(max_abs(self_attention_pool(same, 10.0), one.row(0).transpose()) <= 1e-15);
  CHECK_THROWS_AS(self_attention_pool(Matrix(0, 4), 10.0), Error);
}

TEST_CASE("self_attention_pool by hand") {
  // Two unit rows always score equally against their mean.
  Matrix f(2, 2);
  f << 1, 0, 0.6, 0.8;
  auto two = self_attention_pool_cached(f, 10.0);
  CHECK(std::abs(two.weights[0] - 0.5) <= 1e-12);
  Vector mean(2);
  mean << 0.8, 0.4;
  CHECK(max_abs(two.output, mean / mean.norm()) <= 1e-9);

  Matrix m(3, 2);
  m << 1, 0, 1, 0, 0, 1;
  const double a = std::exp(10.0 * 2 / 3), b = std::exp(10.0 / 3);
  const double w0 = a / (2 * a + b), w2 = b / (2 * a + b);
  Vector want(2);
  want << 2 * w0, w2;
  auto cache = self_attention_pool_cached(m, 10.0);
  CHECK(std::abs(cache.weights[0] - w0) <= 1e-12);
  CHECK(std::abs(cache.weights[2] - w2) <= 1e-12);
  CHECK(max_abs(cache.output, want / want.norm()) <= 1e-9);
}

TEST_CASE("cvlm_attend symmetry and limit") {
  Gen g(2);
  auto corpus = random_corpus(g, 5, 4);
  auto head = random_head(g, 4);
  head.query_proj.setZero();
  Vector mean = corpus.concepts.colwise().mean().transpose();
  CHECK(max_abs(cvlm_attend(g.unit(4), corpus, head, 10.0), mean / mean.norm()) <= 1e-12);

  head.query_proj = Matrix::Identity(4, 4);
  head.key_proj = Matrix::Identity(4, 4);
  Vector x = corpus.concepts.row(3).transpose();
  CHECK(max_abs(cvlm_attend(x, corpus, head, 1e6), x) <= 1e-9);
}

TEST_CASE("cvlm_attend z=2 by hand") {
  CorpusEmbedding corpus{Matrix(2, 2), {"a", "b"}};
  corpus.concepts << 1, 0, 0, 1;
  ConsensusHeadParams head{Matrix(2, 2), Matrix(2, 2), Vector::Zero(4), Vector::Zero(1), Vector::Zero(3)};
  head.query_proj << 2, 0, 0, 1;
  head.key_proj << 1, 1, 0, 1;
  Vector v(2);
  v << 0.6, 0.8;
  // W1 v = (1.2, 0.8); W2 q0 = (1, 0); W2 q1 = (1, 1)
  const double c0 = 1.2, c1 = 2.0, lambda = 3.0;
  const double w0 = std::exp(lambda * c0) / (std::exp(lambda * c0) + std::exp(lambda * c1));
  Vector want(2);
  want << w0, 1 - w0;
  CHECK(max_abs(cvlm_attend(v, corpus, head, lambda), want / want.norm()) <= 1e-9);
}

TEST_CASE("ctlm_attend degenerate mixtures") {
  Gen g(3);
  auto corpus = random_corpus(g, 4, 3);
  auto head = random_head(g, 3);
  ConceptLabel label{Vector(4)};
  label.weights << 0.5, 0, 0.25, 0.25;
  Vector t = g.unit(3);
  ConsensusOptions opts{10.0, 0.0, CtlmMixture::Prior};
  CHECK(max_abs(ctlm_attend(t, corpus, label, head, opts), cvlm_attend(t, corpus, head, 10.0)) <= 1e-15);
  opts.eta = 1.0;
  Vector prior = corpus.concepts.transpose() * label.weights;
  CHECK(max_abs(ctlm_attend(t, corpus, label, head, opts), prior / prior.norm()) <= 1e-12);
  CHECK(max_abs(ctlm_attend(g.unit(3), corpus, label, head, opts), prior / prior.norm()) <= 1e-12);

  opts.mixture = CtlmMixture::Literal;
  opts.eta = 0.35;
  CHECK(max_abs(ctlm_attend(t, corpus, label, head, opts), cvlm_attend(t, corpus, head, 10.0)) <= 1e-12);
}

TEST_CASE("ctlm_attend eta=0.35 by hand") {
  CorpusEmbedding corpus{Matrix(3, 2), {"a", "b", "c"}};
  corpus.concepts << 1, 0, 0, 1, std::sqrt(0.5), std::sqrt(0.5);
  ConsensusHeadParams head{Matrix::Identity(2, 2), Matrix::Identity(2, 2), Vector::Zero(4), Vector::Zero(1),
                           Vector::Zero(3)};
  ConceptLabel label{Vector(3)};
  label.weights << 0, 1, 0;
  Vector t(2);
  t << 1, 0;
  const double lambda = 2.0, eta = 0.35;
  const double e0 = std::exp(lambda), e1 = 1.0, e2 = std::exp(lambda * std::sqrt(0.5));
  const double z = e0 + e1 + e2;
  const double w0 = (1 - eta) * e0 / z, w1 = (1 - eta) * e1 / z + eta, w2 = (1 - eta) * e2 / z;
  Vector want(2);
  want << w0 + w2 * std::sqrt(0.5), w1 + w2 * std::sqrt(0.5);
  ConsensusOptions opts{lambda, eta, CtlmMixture::Prior};
  CHECK(max_abs(ctlm_attend(t, corpus, label, head, opts), want / want.norm()) <= 1e-9);
}

TEST_CASE("ctlm_attend rejects invalid labels") {
  Gen g(4);
  auto corpus = random_corpus(g, 3, 3);
  auto head = random_head(g, 3);
  ConsensusOptions opts;
  ConceptLabel bad{Vector(3)};
  bad.weights << 0.5, 0.5, 0.5;
  CHECK_THROWS_AS(ctlm_attend(g.unit(3), corpus, bad, head, opts), Error);
  bad.weights << 1.5, -0.5, 0;
  CHECK_THROWS_AS(ctlm_attend(g.unit(3), corpus, bad, head, opts), Error);
  ConceptLabel shortl{Vector::Constant(2, 0.5)};
  CHECK_THROWS_AS(ctlm_attend(g.unit(3), corpus, shortl, head, opts), Error);
}

TEST_CASE("ctlm weights stay convex for any eta") {
  Gen g(5);
  for (int t = 0; t < 50; ++t) {
    const auto z = static_cast<Eigen::Index>(g.between(2, 6));
    auto corpus = random_corpus(g, z, 4);
    auto head = random_head(g, 4);
    Vector raw = g.vector(z).cwiseAbs();
    raw[0] += 0.1;
    ConceptLabel label{raw / raw.sum()};
    ConsensusOptions opts{g.uniform(0.5, 20.0), g.uniform(0.0, 1.0), CtlmMixture::Prior};
    auto cache = corpus_attend_cached(g.unit(4), corpus, head, opts, &label);
    CHECK(cache.weights.minCoeff() >= 0.0);
    CHECK(std::abs(cache.weights.sum() - 1.0) <= 1e-9);
    CHECK(std::abs(cache.output.norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("concept labels from caption words") {
  CorpusEmbedding corpus{Matrix::Identity(3, 3), {"dog", "ball", "grass"}};
  auto l = make_concept_label({"a", "dog", "with", "a", "ball"}, corpus);
  CHECK(l.weights[0] == 0.5);
  CHECK(l.weights[1] == 0.5);
  CHECK(l.weights[2] == 0.0);
  auto u = make_concept_label({"nothing", "here"}, corpus);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(u.weights[i] - 1.0 / 3) <= 1e-15);
}

TEST_CASE("gated_fuse cases") {
  Gen g(6);
  auto head = random_head(g, 4);
  Vector s = g.unit(4), c = g.unit(4);
  CHECK(max_abs(gated_fuse(s, s, head), s) <= 1e-12);
  head.gate_weight.setZero();
  head.gate_bias[0] = 100.0;
  CHECK(max_abs(gated_fuse(s, c, head), s) <= 1e-12);
  head.gate_bias[0] = 0.0;
  Vector e0 = Vector::Unit(4, 0), e1 = Vector::Unit(4, 2);
  CHECK(gated_fuse_cached(e0, e1, head).gate == 0.5);
  CHECK(max_abs(gated_fuse(e0, e1, head), (e0 + e1) / std::sqrt(2.0)) <= 1e-15);
}

TEST_CASE("stack_final cases") {
  Gen g(7);
  auto head = random_head(g, 4);
  Vector a = g.unit(4), b = g.unit(4), c = g.unit(4);
  head.stack_logits.setZero();
  CHECK(max_abs(stack_final(a, a, a, head), a) <= 1e-15);
  Vector want = (a + b + c) / 3.0;
  CHECK(max_abs(stack_final(a, b, c, head), want / want.norm()) <= 1e-12);
  head.stack_logits << 0, 1e3, 0;
  CHECK(max_abs(stack_final(a, b, c, head), b) <= 1e-12);
}

TEST_CASE("consensus outputs are unit norm") {
  Gen g(8);
  for (int t = 0; t < 30; ++t) {
    auto corpus = random_corpus(g, 5, 6);
    auto head = random_head(g, 6);
    Matrix local = g.unit_rows(g.between(1, 7), 6);
    auto label = make_concept_label({"c1"}, corpus);
    for (const ConceptLabel* l : std::vector<const ConceptLabel*>{nullptr, &label}) {
      auto fwd = consensus_forward(local, corpus, head, ConsensusOptions{}, l);
      CHECK(std::abs(fwd.global().norm() - 1) <= 1e-12);
      CHECK(std::abs(fwd.corpus().norm() - 1) <= 1e-12);
      CHECK(std::abs(fwd.fused().norm() - 1) <= 1e-12);
      CHECK(std::abs(fwd.output().norm() - 1) <= 1e-12);
    }
  }
}

TEST_CASE("cvlm_attend is equivariant to corpus row order") {
  Gen g(9);
  for (int t = 0; t < 20; ++t) {
    auto corpus = random_corpus(g, 6, 4);
    auto head = random_head(g, 4);
    Vector v = g.unit(4);
    std::vector<Eigen::Index> perm = {0, 1, 2, 3, 4, 5};
    g.shuffle(perm);
    CorpusEmbedding shuffled = corpus;
    for (Eigen::Index i = 0; i < 6; ++i) shuffled.concepts.row(i) = corpus.concepts.row(perm[i]);
    ConsensusOptions opts;
    auto a = corpus_attend_cached(v, corpus, head, opts, nullptr);
    auto b = corpus_attend_cached(v, shuffled, head, opts, nullptr);
    CHECK(max_abs(a.output, b.output) <= 1e-12);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(std::abs(b.weights[i] - a.weights[perm[i]]) <= 1e-12);
  }
}

TEST_CASE("consensus head gradients match finite differences") {
  Gen g(10);
  auto corpus = random_corpus(g, 5, 6);
  auto head = random_head(g, 6);
  Matrix local = g.unit_rows(4, 6);
  Vector probe = g.unit(6);
  auto label = make_concept_label({"c2", "c4"}, corpus);
  ConsensusOptions opts{10.0, 0.35, CtlmMixture::Prior};
  auto fwd = consensus_forward(local, corpus, head, opts, &label);
  auto grads = zeros_like(head);
  Matrix d_local = consensus_backward(local, fwd, corpus, head, opts, probe, grads);

  auto f_head = [&](auto& slot) {
    return [&](const Matrix& m) {
      const auto base = slot;
      slot = m;
      const double s = consensus_forward(local, corpus, head, opts, &label).output().dot(probe);
      slot = base;
      return s;
    };
  };
  CHECK(finite_diff_check("query", f_head(head.query_proj), head.query_proj, grads.query_proj, 3e-5).max_rel_error <
        1e-4);
  CHECK(finite_diff_check("key", f_head(head.key_proj), head.key_proj, grads.key_proj, 3e-5).max_rel_error < 1e-4);
  CHECK(finite_diff_check("gate", f_head(head.gate_weight), head.gate_weight, grads.gate_weight, 3e-5)
            .max_rel_error < 1e-4);
  CHECK(finite_diff_check("stack", f_head(head.stack_logits), head.stack_logits, grads.stack_logits, 3e-5)
            .max_rel_error < 1e-4);
  auto f_local = [&](const Matrix& m) { return consensus_forward(m, corpus, head, opts, &label).output().dot(probe); };
  CHECK(finite_diff_check("local", f_local, local, d_local, 3e-5).max_rel_error < 1e-4);
}
