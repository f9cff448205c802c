#pragma once

#include <random>
#include <string>
#include <vector>

#include "amsps/consensus.hpp"
#include "amsps/encoders.hpp"

namespace amsps {

struct ModelDims {
  Eigen::Index feature_dim = 64;  // D_in
  Eigen::Index embed_dim = 32;    // joint space d (= GRU hidden size)
  Eigen::Index word_dim = 32;
  Eigen::Index vocab_size = 0;
};

struct ModelParams {
  ImageEncoderParams image;
  TextEncoderParams text;
  ConsensusParams consensus;
};

ModelParams init_model(const ModelDims& dims, std::mt19937_64& rng);
ModelParams zeros_like(const ModelParams& p);
void validate(const ModelParams& p);

/// Mutable view of one parameter tensor.
struct TensorRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

/// Every tensor in a fixed order; names are stable across runs.
std::vector<TensorRef> tensors(ModelParams& p);
std::size_t parameter_count(const ModelParams& p);
bool all_finite(const ModelParams& p);

struct ImageForward {
  ImageEncoding encoding;
  ConsensusForward head;

  const Vector& output() const { return head.output(); }
};

struct CaptionForward {
  TextEncoding encoding;
  ConceptLabel label;
  ConsensusForward head;

  const Vector& output() const { return head.output(); }
};

ImageForward embed_image_cached(const Matrix& regions, const ModelParams& p, const CorpusEmbedding& corpus,
                                const ConsensusOptions& opts);
void embed_image_backward(const Matrix& regions, const ImageForward& fwd, const Vector& d_output,
                          const ModelParams& p, const CorpusEmbedding& corpus, const ConsensusOptions& opts,
                          ModelParams& grads);

CaptionForward embed_caption_cached(const std::vector<int>& tokens, const ConceptLabel& label, const ModelParams& p,
                                    const CorpusEmbedding& corpus, const ConsensusOptions& opts);
void embed_caption_backward(const CaptionForward& fwd, const Vector& d_output, const ModelParams& p,
                            const CorpusEmbedding& corpus, const ConsensusOptions& opts, ModelParams& grads);

Vector embed_image(const Matrix& regions, const ModelParams& p, const CorpusEmbedding& corpus,
                   const ConsensusOptions& opts);
Vector embed_caption(const std::vector<int>& tokens, const ConceptLabel& label, const ModelParams& p,
                     const CorpusEmbedding& corpus, const ConsensusOptions& opts);

}  // namespace amsps
