#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "amsps/numerics.hpp"

namespace amsps {

/// Embeddings from a previously trained model, used to find hard negatives.
struct PredictiveCandidates {
  Matrix images;    // a × d, unit rows
  Matrix captions;  // b × d, unit rows
  std::vector<std::size_t> caption_to_image;
  std::vector<std::vector<std::size_t>> image_to_captions;

  /// Fills image_to_captions from caption_to_image (ascending caption order).
  static PredictiveCandidates from_ownership(Matrix images, Matrix captions,
                                             std::vector<std::size_t> caption_to_image);
  std::size_t num_images() const { return static_cast<std::size_t>(images.rows()); }
  std::size_t num_captions() const { return static_cast<std::size_t>(captions.rows()); }
};

void validate(const PredictiveCandidates& cands);

struct SimilarityMatrices {
  Matrix caption_image;  // M_vs, b × a: [j][i] = cos(caption j, image i)
  Matrix image_caption;  // M_sv, a × b, the transpose
};

struct TopPositionLists {
  std::vector<std::vector<std::size_t>> image_top_captions;  // P_vs, k per image
  std::vector<std::vector<std::size_t>> caption_top_images;  // P_sv, q per caption
  std::size_t k = 0;
  std::size_t q = 0;
};

struct MinedQuadruple {
  std::size_t anchor_image = 0;
  std::size_t anchor_caption = 0;
  std::size_t t_bar = 0;   // hard negative caption of the anchor image
  std::size_t v_bar = 0;   // hard negative image of the anchor caption
  std::size_t t_dbar = 0;  // ground-truth caption of v_bar
  std::size_t v_dbar = 0;  // ground-truth image of t_bar
};

SimilarityMatrices build_similarity(const PredictiveCandidates& cands);

/// Highest-scoring non-matching captions per image (k) and images per
/// caption (q); ties resolved by ascending index.
TopPositionLists top_positions(const SimilarityMatrices& sim, const PredictiveCandidates& cands, std::size_t k,
                               std::size_t q);

/// Uniform draw from the anchor's top lists; partners resolved through
/// the ground-truth maps (first caption by index for v_bar).
MinedQuadruple draw_quadruple(const TopPositionLists& lists, const PredictiveCandidates& cands,
                              std::size_t anchor_image, std::size_t anchor_caption, std::mt19937_64& rng);
MinedQuadruple draw_quadruple(const TopPositionLists& lists, const PredictiveCandidates& cands,
                              std::size_t anchor_image, std::size_t anchor_caption, std::uint64_t seed);

}  // namespace amsps
