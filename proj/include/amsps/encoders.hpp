#pragma once

#include <random>
#include <string>
#include <vector>

#include "amsps/numerics.hpp"

namespace amsps {

struct RegionFeatures {
  std::string image_id;
  Matrix regions;  // o × D_in
};

struct TokenSequence {
  std::string caption_id;
  std::string image_id;
  std::vector<int> tokens;
};

/// Fully connected projection of region features: v = W_fᵀ f + b_f.
struct ImageEncoderParams {
  Matrix weight;  // D_in × d
  Vector bias;    // d

  Eigen::Index input_dim() const { return weight.rows(); }
  Eigen::Index output_dim() const { return weight.cols(); }
};

/// One GRU gate: pre-activation = input·x + recurrent·h + bias.
struct GruGate {
  Matrix input;      // hidden × embed
  Matrix recurrent;  // hidden × hidden
  Vector bias;       // hidden
};

struct GruParams {
  GruGate update;
  GruGate reset;
  GruGate candidate;

  Eigen::Index hidden_dim() const { return update.recurrent.rows(); }
  Eigen::Index input_dim() const { return update.input.cols(); }
};

struct TextEncoderParams {
  Matrix embedding;  // vocab × embed
  GruParams forward;
  GruParams backward;

  Eigen::Index vocab_size() const { return embedding.rows(); }
  Eigen::Index embed_dim() const { return embedding.cols(); }
  Eigen::Index hidden_dim() const { return forward.hidden_dim(); }
};

ImageEncoderParams init_image_encoder(Eigen::Index input_dim, Eigen::Index output_dim, std::mt19937_64& rng);
TextEncoderParams init_text_encoder(Eigen::Index vocab_size, Eigen::Index embed_dim, Eigen::Index hidden_dim,
                                    std::mt19937_64& rng);

ImageEncoderParams zeros_like(const ImageEncoderParams& p);
GruParams zeros_like(const GruParams& p);
TextEncoderParams zeros_like(const TextEncoderParams& p);

void validate(const ImageEncoderParams& p);
void validate(const GruParams& p);
void validate(const TextEncoderParams& p);

// --- image side -----------------------------------------------------------

struct ImageEncoding {
  Matrix projected;  // rows before normalization
  Vector row_norms;
  Matrix output;     // o × d, unit rows
};

/// Projects every region and L2-normalizes the result row by row.
Matrix encode_image(const Matrix& regions, const ImageEncoderParams& params);
ImageEncoding encode_image_cached(const Matrix& regions, const ImageEncoderParams& params);
/// Accumulates parameter gradients into `grads`.
void encode_image_backward(const Matrix& regions, const ImageEncoding& enc, const Matrix& d_output,
                           ImageEncoderParams& grads);

// --- GRU ------------------------------------------------------------------

struct GruStepCache {
  Vector x;
  Vector h_prev;
  Vector update;     // z
  Vector reset;      // r
  Vector candidate;  // h̃
  Vector h;
};

/// h = (1 − z)⊙h_prev + z⊙h̃ with h̃ = tanh(W x + U (r⊙h_prev) + b).
Vector gru_step(const Vector& x, const Vector& h_prev, const GruParams& gates);
GruStepCache gru_step_cached(const Vector& x, const Vector& h_prev, const GruParams& gates);

struct GruStepGrad {
  Vector dx;
  Vector dh_prev;
};
GruStepGrad gru_step_backward(const GruStepCache& cache, const Vector& dh, const GruParams& gates,
                              GruParams& grads);

// --- text side ------------------------------------------------------------

struct TextEncoding {
  std::vector<int> tokens;
  std::vector<GruStepCache> forward_steps;   // position j
  std::vector<GruStepCache> backward_steps;  // position j (scanned right to left)
  Matrix averaged;                           // (h_f + h_b)/2 per position
  Vector row_norms;
  Matrix output;                             // s × hidden, unit rows
};

/// Bidirectional GRU over the word embeddings; each position emits the
/// normalized mean of the forward and backward hidden states.
Matrix encode_text(const std::vector<int>& tokens, const TextEncoderParams& params);
TextEncoding encode_text_cached(const std::vector<int>& tokens, const TextEncoderParams& params);
void encode_text_backward(const TextEncoding& enc, const Matrix& d_output, const TextEncoderParams& params,
                          TextEncoderParams& grads);

}  // namespace amsps
