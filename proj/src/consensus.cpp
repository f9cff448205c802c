#include "amsps/consensus.hpp"

#include <algorithm>

namespace amsps {

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void require_dim(const Vector& v, Eigen::Index d, const char* what) {
  if (v.size() != d) {
    throw Error(ErrorCategory::Shape,
                std::string(what) + ": expected dimension " + std::to_string(d) + ", got " + std::to_string(v.size()));
  }
}

}  // namespace

void validate(const CorpusEmbedding& corpus) {
  if (corpus.size() < 2) throw Error(ErrorCategory::Data, "corpus embedding needs at least 2 concepts");
  if (!corpus.names.empty() && static_cast<Eigen::Index>(corpus.names.size()) != corpus.size()) {
    throw Error(ErrorCategory::Data, "corpus embedding: " + std::to_string(corpus.names.size()) +
                                         " concept names for " + std::to_string(corpus.size()) + " rows");
  }
  ensure_finite(corpus.concepts, "corpus embedding");
  for (Eigen::Index i = 0; i < corpus.size(); ++i) {
    if (std::abs(corpus.concepts.row(i).norm() - 1.0) > 1e-6) {
      throw Error(ErrorCategory::Data, "corpus embedding row " + std::to_string(i) + " is not unit norm");
    }
  }
}

void validate(const ConceptLabel& label, Eigen::Index corpus_size) {
  if (label.weights.size() != corpus_size) {
    throw Error(ErrorCategory::Shape, "concept label has " + std::to_string(label.weights.size()) +
                                          " entries for a corpus of " + std::to_string(corpus_size));
  }
  if ((label.weights.array() < 0).any() || !all_finite(label.weights) ||
      std::abs(label.weights.sum() - 1.0) > 1e-9) {
    throw Error(ErrorCategory::Data, "concept label is not a probability distribution");
  }
}

ConceptLabel make_concept_label(const Words& caption, const CorpusEmbedding& corpus) {
  const auto z = corpus.size();
  ConceptLabel label{Vector::Zero(z)};
  for (Eigen::Index i = 0; i < z && i < static_cast<Eigen::Index>(corpus.names.size()); ++i) {
    if (std::find(caption.begin(), caption.end(), corpus.names[i]) != caption.end()) label.weights[i] = 1.0;
  }
  const double hits = label.weights.sum();
  if (hits > 0) {
    label.weights /= hits;
  } else {
    label.weights.setConstant(1.0 / static_cast<double>(z));
  }
  return label;
}

void validate(const ConsensusOptions& opts) {
  if (!(opts.lambda > 0)) throw Error(ErrorCategory::Data, "consensus: lambda must be positive");
  if (!(opts.eta >= 0 && opts.eta <= 1)) throw Error(ErrorCategory::Data, "consensus: eta must lie in [0, 1]");
}

ConsensusHeadParams init_consensus_head(Eigen::Index dim, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  ConsensusHeadParams p;
  p.query_proj = uniform_matrix(dim, dim, bound, rng);
  p.key_proj = uniform_matrix(dim, dim, bound, rng);
  const double gate_bound = 1.0 / std::sqrt(2.0 * static_cast<double>(dim));
  p.gate_weight = uniform_matrix(2 * dim, 1, gate_bound, rng);
  p.gate_bias = uniform_matrix(1, 1, gate_bound, rng);
  p.stack_logits = Vector::Zero(3);
  return p;
}

ConsensusHeadParams zeros_like(const ConsensusHeadParams& p) {
  return {Matrix::Zero(p.query_proj.rows(), p.query_proj.cols()), Matrix::Zero(p.key_proj.rows(), p.key_proj.cols()),
          Vector::Zero(p.gate_weight.size()), Vector::Zero(1), Vector::Zero(3)};
}

void validate(const ConsensusHeadParams& p) {
  const auto d = p.dim();
  if (p.query_proj.cols() != d || p.key_proj.rows() != d || p.key_proj.cols() != d || p.gate_weight.size() != 2 * d ||
      p.gate_bias.size() != 1 || p.stack_logits.size() != 3) {
    throw Error(ErrorCategory::Shape, "consensus head parameters have inconsistent shapes");
  }
}

// --- pooling --------------------------------------------------------------

Vector self_attention_pool(const Matrix& features, double lambda) {
  return self_attention_pool_cached(features, lambda).output;
}

PoolCache self_attention_pool_cached(const Matrix& features, double lambda) {
  if (features.rows() == 0) throw Error(ErrorCategory::Data, "self_attention_pool: no features");
  PoolCache c;
  c.query = features.colwise().mean().transpose();
  c.weights = softmax_scaled(Vector(features * c.query), lambda);
  c.pooled = features.transpose() * c.weights;
  c.pooled_norm = c.pooled.norm();
  c.output = l2_normalize(c.pooled);
  return c;
}

Matrix self_attention_pool_backward(const Matrix& features, const PoolCache& c, const Vector& d_output,
                                    double lambda) {
  const Vector d_pooled = l2_normalize_backward(c.output, c.pooled_norm, d_output);
  const Vector d_weights = features * d_pooled;
  // d scores where score_i = query·row_i (softmax_scaled_backward folds in λ)
  const Vector d_scores = softmax_scaled_backward(c.weights, d_weights, lambda);
  const Vector d_query = features.transpose() * d_scores;
  const auto o = static_cast<double>(features.rows());

  Matrix d_features = c.weights * d_pooled.transpose();
  d_features.noalias() += d_scores * c.query.transpose();
  d_features.rowwise() += (d_query / o).transpose();
  return d_features;
}

// --- corpus attention -----------------------------------------------------

AttendCache corpus_attend_cached(const Vector& x, const CorpusEmbedding& corpus, const ConsensusHeadParams& head,
                                 const ConsensusOptions& opts, const ConceptLabel* label) {
  require_dim(x, head.dim(), "corpus_attend input");
  if (corpus.dim() != head.dim()) {
    throw Error(ErrorCategory::Shape, "corpus_attend: corpus " + shape_string(corpus.concepts) +
                                          " incompatible with projection " + shape_string(head.query_proj));
  }
  AttendCache c;
  c.input = x;
  c.projected_query = head.query_proj * x;
  c.projected_keys = corpus.concepts * head.key_proj.transpose();
  c.scores = c.projected_keys * c.projected_query;
  c.softmax = softmax_scaled(c.scores, opts.lambda);
  if (label != nullptr) {
    validate(*label, corpus.size());
    c.weights = (1.0 - opts.eta) * c.softmax;
    if (opts.mixture == CtlmMixture::Prior) {
      c.weights += opts.eta * label->weights;
    } else {
      c.weights += opts.eta * c.softmax;
    }
  } else {
    c.weights = c.softmax;
  }
  c.mixed = corpus.concepts.transpose() * c.weights;
  c.mixed_norm = c.mixed.norm();
  c.output = l2_normalize(c.mixed);
  return c;
}

Vector cvlm_attend(const Vector& v_s, const CorpusEmbedding& corpus, const ConsensusHeadParams& head,
                   double lambda) {
  ConsensusOptions opts;
  opts.lambda = lambda;
  return corpus_attend_cached(v_s, corpus, head, opts, nullptr).output;
}

Vector ctlm_attend(const Vector& t_s, const CorpusEmbedding& corpus, const ConceptLabel& label,
                   const ConsensusHeadParams& head, const ConsensusOptions& opts) {
  validate(opts);
  return corpus_attend_cached(t_s, corpus, head, opts, &label).output;
}

Vector corpus_attend_backward(const AttendCache& c, const CorpusEmbedding& corpus, const ConsensusHeadParams& head,
                              const ConsensusOptions& opts, bool with_label, const Vector& d_output,
                              ConsensusHeadParams& grads) {
  const Vector d_mixed = l2_normalize_backward(c.output, c.mixed_norm, d_output);
  const Vector d_weights = corpus.concepts * d_mixed;
  Vector d_softmax = d_weights;
  if (with_label) {
    d_softmax *= opts.mixture == CtlmMixture::Prior ? (1.0 - opts.eta) : 1.0;
  }
  const Vector d_scores = softmax_scaled_backward(c.softmax, d_softmax, opts.lambda);
  const Vector d_query = c.projected_keys.transpose() * d_scores;
  const Matrix d_keys = d_scores * c.projected_query.transpose();  // z × d
  grads.key_proj.noalias() += d_keys.transpose() * corpus.concepts;
  grads.query_proj.noalias() += d_query * c.input.transpose();
  return head.query_proj.transpose() * d_query;
}

// --- fusion ---------------------------------------------------------------

Vector gated_fuse(const Vector& x_s, const Vector& x_c, const ConsensusHeadParams& head) {
  return gated_fuse_cached(x_s, x_c, head).output;
}

FuseCache gated_fuse_cached(const Vector& x_s, const Vector& x_c, const ConsensusHeadParams& head) {
  const auto d = head.dim();
  require_dim(x_s, d, "gated_fuse x_s");
  require_dim(x_c, d, "gated_fuse x_c");
  FuseCache c;
  const double pre = head.gate_weight.head(d).dot(x_s) + head.gate_weight.tail(d).dot(x_c) + head.gate_bias[0];
  c.gate = sigmoid(pre);
  c.mixed = c.gate * x_s + (1.0 - c.gate) * x_c;
  c.mixed_norm = c.mixed.norm();
  c.output = l2_normalize(c.mixed);
  return c;
}

PairGrad gated_fuse_backward(const Vector& x_s, const Vector& x_c, const FuseCache& c,
                             const ConsensusHeadParams& head, const Vector& d_output, ConsensusHeadParams& grads) {
  const auto d = head.dim();
  const Vector d_mixed = l2_normalize_backward(c.output, c.mixed_norm, d_output);
  const double d_gate = d_mixed.dot(x_s - x_c);
  const double d_pre = d_gate * c.gate * (1.0 - c.gate);
  grads.gate_weight.head(d) += d_pre * x_s;
  grads.gate_weight.tail(d) += d_pre * x_c;
  grads.gate_bias[0] += d_pre;
  PairGrad out;
  out.first = c.gate * d_mixed + d_pre * head.gate_weight.head(d);
  out.second = (1.0 - c.gate) * d_mixed + d_pre * head.gate_weight.tail(d);
  return out;
}

Vector stack_final(const Vector& x_s, const Vector& x_c, const Vector& x_m, const ConsensusHeadParams& head) {
  return stack_final_cached(x_s, x_c, x_m, head).output;
}

StackCache stack_final_cached(const Vector& x_s, const Vector& x_c, const Vector& x_m,
                              const ConsensusHeadParams& head) {
  require_dim(x_c, x_s.size(), "stack_final x_c");
  require_dim(x_m, x_s.size(), "stack_final x_m");
  StackCache c;
  c.alpha = softmax_scaled(head.stack_logits, 1.0);
  c.mixed = c.alpha[0] * x_s + c.alpha[1] * x_c + c.alpha[2] * x_m;
  c.mixed_norm = c.mixed.norm();
  c.output = l2_normalize(c.mixed);
  return c;
}

TripleGrad stack_final_backward(const Vector& x_s, const Vector& x_c, const Vector& x_m, const StackCache& c,
                                const Vector& d_output, ConsensusHeadParams& grads) {
  const Vector d_mixed = l2_normalize_backward(c.output, c.mixed_norm, d_output);
  Vector d_alpha(3);
  d_alpha << d_mixed.dot(x_s), d_mixed.dot(x_c), d_mixed.dot(x_m);
  grads.stack_logits += softmax_scaled_backward(c.alpha, d_alpha, 1.0);
  return {c.alpha[0] * d_mixed, c.alpha[1] * d_mixed, c.alpha[2] * d_mixed};
}

// --- whole head -----------------------------------------------------------

ConsensusForward consensus_forward(const Matrix& local, const CorpusEmbedding& corpus,
                                   const ConsensusHeadParams& head, const ConsensusOptions& opts,
                                   const ConceptLabel* label) {
  ConsensusForward f;
  f.with_label = label != nullptr;
  f.pool = self_attention_pool_cached(local, opts.lambda);
  f.attend = corpus_attend_cached(f.pool.output, corpus, head, opts, label);
  f.fuse = gated_fuse_cached(f.pool.output, f.attend.output, head);
  f.stack = stack_final_cached(f.pool.output, f.attend.output, f.fuse.output, head);
  return f;
}

Matrix consensus_backward(const Matrix& local, const ConsensusForward& f, const CorpusEmbedding& corpus,
                          const ConsensusHeadParams& head, const ConsensusOptions& opts, const Vector& d_output,
                          ConsensusHeadParams& grads) {
  const auto& xs = f.pool.output;
  const auto& xc = f.attend.output;
  const auto& xm = f.fuse.output;
  auto g_stack = stack_final_backward(xs, xc, xm, f.stack, d_output, grads);
  auto g_fuse = gated_fuse_backward(xs, xc, f.fuse, head, g_stack.third, grads);
  Vector d_xs = g_stack.first + g_fuse.first;
  const Vector d_xc = g_stack.second + g_fuse.second;
  d_xs += corpus_attend_backward(f.attend, corpus, head, opts, f.with_label, d_xc, grads);
  return self_attention_pool_backward(local, f.pool, d_xs, opts.lambda);
}

}  // namespace amsps
