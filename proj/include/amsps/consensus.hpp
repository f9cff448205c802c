#pragma once

#include <random>
#include <string>
#include <vector>

#include "amsps/numerics.hpp"
#include "amsps/text.hpp"

namespace amsps {

/// Frozen bank of concept embeddings q_1..q_z (unit rows).
struct CorpusEmbedding {
  Matrix concepts;                 // z × d
  std::vector<std::string> names;  // z concept strings

  Eigen::Index size() const { return concepts.rows(); }
  Eigen::Index dim() const { return concepts.cols(); }
};

void validate(const CorpusEmbedding& corpus);

/// Prior distribution over the z concepts for one caption.
struct ConceptLabel {
  Vector weights;
};

void validate(const ConceptLabel& label, Eigen::Index corpus_size);

/// Uniform mass over concepts named in the caption; uniform over all when none are.
ConceptLabel make_concept_label(const Words& caption, const CorpusEmbedding& corpus);

/// How the CTLM attention weights combine with the prior label.
enum class CtlmMixture {
  Prior,    // (1−η)·softmax + η·label
  Literal,  // (1−η)·softmax + η·softmax, i.e. plain softmax
};

struct ConsensusOptions {
  double lambda = 10.0;
  double eta = 0.35;
  CtlmMixture mixture = CtlmMixture::Prior;
};

void validate(const ConsensusOptions& opts);

/// Per-modality parameters of the attend / fuse / stack head.
struct ConsensusHeadParams {
  Matrix query_proj;    // W_θ1, d × d
  Matrix key_proj;      // W_θ2, d × d
  Vector gate_weight;   // 2d, readout of concat(x_s, x_c)
  Vector gate_bias;     // 1
  Vector stack_logits;  // 3, pre-softmax weights for (x_s, x_c, x_m)

  Eigen::Index dim() const { return query_proj.rows(); }
};

struct ConsensusParams {
  ConsensusHeadParams visual;
  ConsensusHeadParams textual;
};

ConsensusHeadParams init_consensus_head(Eigen::Index dim, std::mt19937_64& rng);
ConsensusHeadParams zeros_like(const ConsensusHeadParams& p);
void validate(const ConsensusHeadParams& p);

// --- pooling --------------------------------------------------------------

struct PoolCache {
  Vector query;    // mean row
  Vector weights;  // softmax(λ · query·row_i)
  Vector pooled;   // Σ w_i row_i
  double pooled_norm = 0;
  Vector output;
};

/// Mean-query self attention over local features, normalized.
Vector self_attention_pool(const Matrix& features, double lambda);
PoolCache self_attention_pool_cached(const Matrix& features, double lambda);
Matrix self_attention_pool_backward(const Matrix& features, const PoolCache& cache, const Vector& d_output,
                                    double lambda);

// --- corpus attention -----------------------------------------------------

struct AttendCache {
  Vector input;
  Vector projected_query;  // W_θ1 x
  Matrix projected_keys;   // rows W_θ2 q_i
  Vector scores;           // ĉ
  Vector softmax;          // softmax(λ ĉ)
  Vector weights;          // final mixture weights
  Vector mixed;            // Σ weights_i q_i
  double mixed_norm = 0;
  Vector output;
};

/// CVLM: v_c = normalize(Σ softmax(λ ĉ)_i q_i), ĉ_i = (W_θ1 v_s)·(W_θ2 q_i).
Vector cvlm_attend(const Vector& v_s, const CorpusEmbedding& corpus, const ConsensusHeadParams& head,
                   double lambda);
/// CTLM: attention weights mixed with the concept prior before pooling Q.
Vector ctlm_attend(const Vector& t_s, const CorpusEmbedding& corpus, const ConceptLabel& label,
                   const ConsensusHeadParams& head, const ConsensusOptions& opts);

/// Shared implementation; `label` null means pure softmax attention.
AttendCache corpus_attend_cached(const Vector& x, const CorpusEmbedding& corpus, const ConsensusHeadParams& head,
                                 const ConsensusOptions& opts, const ConceptLabel* label);
/// Returns d input; accumulates projection gradients into `grads`.
Vector corpus_attend_backward(const AttendCache& cache, const CorpusEmbedding& corpus,
                              const ConsensusHeadParams& head, const ConsensusOptions& opts, bool with_label,
                              const Vector& d_output, ConsensusHeadParams& grads);

// --- fusion ---------------------------------------------------------------

struct FuseCache {
  double gate = 0;  // u
  Vector mixed;
  double mixed_norm = 0;
  Vector output;
};

/// x_m = normalize(u·x_s + (1−u)·x_c), u = sigmoid(w_u·[x_s; x_c] + b).
Vector gated_fuse(const Vector& x_s, const Vector& x_c, const ConsensusHeadParams& head);
FuseCache gated_fuse_cached(const Vector& x_s, const Vector& x_c, const ConsensusHeadParams& head);

struct PairGrad {
  Vector first;
  Vector second;
};
PairGrad gated_fuse_backward(const Vector& x_s, const Vector& x_c, const FuseCache& cache,
                             const ConsensusHeadParams& head, const Vector& d_output, ConsensusHeadParams& grads);

struct StackCache {
  Vector alpha;  // softmax(stack_logits)
  Vector mixed;
  double mixed_norm = 0;
  Vector output;
};

/// x_f = normalize(Σ softmax(stack_logits)_k x_k) over (x_s, x_c, x_m).
Vector stack_final(const Vector& x_s, const Vector& x_c, const Vector& x_m, const ConsensusHeadParams& head);
StackCache stack_final_cached(const Vector& x_s, const Vector& x_c, const Vector& x_m,
                              const ConsensusHeadParams& head);

struct TripleGrad {
  Vector first;
  Vector second;
  Vector third;
};
TripleGrad stack_final_backward(const Vector& x_s, const Vector& x_c, const Vector& x_m, const StackCache& cache,
                                const Vector& d_output, ConsensusHeadParams& grads);

// --- whole head -----------------------------------------------------------

struct ConsensusForward {
  PoolCache pool;
  AttendCache attend;
  FuseCache fuse;
  StackCache stack;
  bool with_label = false;

  const Vector& global() const { return pool.output; }
  const Vector& corpus() const { return attend.output; }
  const Vector& fused() const { return fuse.output; }
  const Vector& output() const { return stack.output; }
};

/// local features → x_s → x_c → x_m → x_f. Pass a label for the text side.
ConsensusForward consensus_forward(const Matrix& local, const CorpusEmbedding& corpus,
                                   const ConsensusHeadParams& head, const ConsensusOptions& opts,
                                   const ConceptLabel* label);
/// Returns d local features; accumulates head gradients.
Matrix consensus_backward(const Matrix& local, const ConsensusForward& fwd, const CorpusEmbedding& corpus,
                          const ConsensusHeadParams& head, const ConsensusOptions& opts, const Vector& d_output,
                          ConsensusHeadParams& grads);

}  // namespace amsps
