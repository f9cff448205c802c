#pragma once

#include <array>
#include <optional>
#include <vector>

#include "amsps/cider.hpp"
#include "amsps/numerics.hpp"

namespace amsps {

inline double hinge(double x) { return x > 0 ? x : 0.0; }

// --- per-anchor scalar forms ---------------------------------------------

/// Similarities seen by one anchor pair (v, t).
struct AnchorScores {
  double positive = 0;   // S(v, t)
  double v_tneg = 0;     // S(v, t⁻), in-batch negative caption
  double vneg_t = 0;     // S(v⁻, t), in-batch negative image
  double v_tbar = 0;     // S(v, t̄)
  double vbar_t = 0;     // S(v̄, t)
  double vbar_tbar = 0;  // S(v̄, t̄)
  double pair_term = 0;  // S(v⁼_f, t⁼_f)
};

using HingeTriple = std::array<double, 3>;

inline double sum(const HingeTriple& h) { return h[0] + h[1] + h[2]; }

/// [Δ₁ − S(v,t) + S(v,t⁻)]₊ + [Δ₁ − S(v,t) + S(v⁻,t)]₊
double triplet_anchor(const AnchorScores& s, double delta1);

/// Image-anchored hierarchy: in-batch negative with Δ_v, then t̄ and (v̄, t̄) with Δ₂.
HingeTriple hier_loss_fv(const AnchorScores& s, double delta_v, double delta2);
/// Text-anchored hierarchy: in-batch negative with Δ_t, then v̄ and (v⁼_f, t⁼_f) with Δ₂.
HingeTriple hier_loss_ft(const AnchorScores& s, double delta_t, double delta2);

struct PenaltyWeights {
  double w1 = 1;
  double w2 = 1;
  double tau = 1.5;
  double mu = 0.3;
};

/// w = τ − (mined − in-batch)/μ, clamped to [0, τ]. Treated as constants.
PenaltyWeights penalty_weights(double s_v_tbar, double s_v_tneg, double s_vbar_t, double s_vneg_t, double tau,
                               double mu);

// --- batch forms ----------------------------------------------------------

enum class NegativeMode {
  Hardest,  // max over in-batch negatives
  Sum,      // sum over all in-batch negatives (in-batch hinges only)
};

/// Which embeddings fill the (v⁼_f, t⁼_f) slot.
enum class AuxPairMapping {
  Partners,          // (v̿, t̿): ground-truth partners of t̄ and v̄
  NegativeImagePair, // (v̄, t̿): the mined image with its own caption
};

struct LossOptions {
  double delta1 = 0.2;
  double delta2 = 0.0;
  double tau = 1.5;
  double mu = 0.3;
  NegativeMode negatives = NegativeMode::Hardest;
};

struct MinedSimilarities {
  double v_tbar = 0;
  double vbar_t = 0;
  double vbar_tbar = 0;
  double pair_term = 0;
};

struct BatchSimilarities {
  Matrix scores;                         // B × B, [i][j] = S(v_i, t_j)
  std::vector<MinedSimilarities> mined;  // one per anchor, empty without mining
  std::vector<std::size_t> image_group;  // optional; equal ids are never negatives of each other

  std::size_t size() const { return static_cast<std::size_t>(scores.rows()); }
};

struct NegativeChoice {
  std::size_t caption = 0;  // t⁻ column for anchor i
  std::size_t image = 0;    // v⁻ row for anchor i
};

/// Hardest in-batch negatives per anchor, ties to the lowest index.
std::vector<NegativeChoice> hardest_negatives(const BatchSimilarities& batch);

/// Six named hinge values per anchor: fv1 fv2 fv3 ft1 ft2 ft3.
using AnchorTerms = std::array<double, 6>;

struct LossBreakdown {
  double total = 0;
  std::vector<AnchorTerms> per_term;
  std::vector<double> w1, w2;
  std::vector<double> delta_v, delta_t;
  double delta2 = 0;
  std::vector<NegativeChoice> negatives;

  Matrix d_scores;                         // d total / d scores
  std::vector<MinedSimilarities> d_mined;  // d total / d mined similarities

  double mean_term(std::size_t k) const;
  double mean_w1() const;
  double mean_w2() const;
  double mean_delta_v() const;
  double mean_delta_t() const;
};

/// VSE-style triplet loss summed over anchors.
LossBreakdown triplet_loss(const BatchSimilarities& batch, const LossOptions& opts);

/// Σ_anchors w1·L_fv + w2·L_ft with per-anchor margins. When `frozen_weights`
/// is given those weights replace the computed ones.
LossBreakdown ahrl_total(const BatchSimilarities& batch, const std::vector<AdaptiveMargins>& margins,
                         const LossOptions& opts, const std::vector<PenaltyWeights>* frozen_weights = nullptr);

/// Fixed-margin special case: Δ_v = Δ_t = Δ₁.
LossBreakdown hrl_total(const BatchSimilarities& batch, const LossOptions& opts,
                        const std::vector<PenaltyWeights>* frozen_weights = nullptr);

// --- embedding level ------------------------------------------------------

struct BatchEmbeddings {
  Matrix images;    // B × d, anchors v
  Matrix captions;  // B × d, anchors t
  // Mined rows per anchor; all empty in phase 1.
  Matrix neg_captions;      // t̄
  Matrix neg_images;        // v̄
  Matrix partner_images;    // v̿
  Matrix partner_captions;  // t̿
  std::vector<std::size_t> image_group;

  bool has_mined() const { return neg_captions.rows() > 0; }
};

struct EmbeddingGrads {
  Matrix images;
  Matrix captions;
  Matrix neg_captions;
  Matrix neg_images;
  Matrix partner_images;
  Matrix partner_captions;
};

BatchSimilarities batch_similarities(const BatchEmbeddings& emb, AuxPairMapping mapping);

/// Chain rule from similarity gradients to every embedding row.
EmbeddingGrads backprop_similarities(const BatchEmbeddings& emb, const LossBreakdown& loss, AuxPairMapping mapping);

}  // namespace amsps
