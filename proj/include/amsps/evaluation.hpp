#pragma once

#include <array>
#include <vector>

#include "amsps/numerics.hpp"

namespace amsps {

enum class Direction { ImageToText, TextToImage };

/// Per query, every gallery item ordered by non-increasing score.
struct RankingResult {
  Direction direction = Direction::ImageToText;
  std::vector<std::vector<std::size_t>> order;
  std::vector<std::vector<double>> scores;  // aligned with order
};

struct GroundTruth {
  std::vector<std::size_t> caption_to_image;
  std::vector<std::vector<std::size_t>> image_to_captions;

  static GroundTruth from_ownership(std::vector<std::size_t> caption_to_image, std::size_t num_images);
};

inline constexpr std::array<std::size_t, 3> kRecallKs{1, 5, 10};

/// Percentages for K = 1, 5, 10.
using DirectionalRecall = std::array<double, 3>;

struct RecallReport {
  DirectionalRecall i2t{};
  DirectionalRecall t2i{};
  double r_sum = 0;
};

/// Cosine scores between unit rows; stable descending sort, ties by index.
RankingResult rank_all(const Matrix& images, const Matrix& captions, Direction direction);
/// Same ordering rule from a precomputed image × caption score matrix.
RankingResult rank_scores(const Matrix& image_caption_scores, Direction direction);

/// I2T hits when any of the image's captions is in the top K; T2I when the
/// caption's image is.
DirectionalRecall recall_at_k(const RankingResult& ranking, const GroundTruth& truth,
                              const std::array<std::size_t, 3>& ks = kRecallKs);
RecallReport make_report(const DirectionalRecall& i2t, const DirectionalRecall& t2i);
RecallReport evaluate_recall(const RankingResult& i2t, const RankingResult& t2i, const GroundTruth& truth);

/// Test-time I2T re-ranking: γ·minmax(sim) + (1−γ)/rank of the image in the
/// caption's T2I list. Ties keep the base order.
RankingResult hybrid_rerank_i2t(const RankingResult& base, const RankingResult& reverse, double gamma);

}  // namespace amsps
