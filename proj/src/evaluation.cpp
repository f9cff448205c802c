#include "amsps/evaluation.hpp"

#include <algorithm>
#include <numeric>

namespace amsps {

GroundTruth GroundTruth::from_ownership(std::vector<std::size_t> caption_to_image, std::size_t num_images) {
  GroundTruth g;
  g.caption_to_image = std::move(caption_to_image);
  g.image_to_captions.assign(num_images, {});
  for (std::size_t j = 0; j < g.caption_to_image.size(); ++j) {
    if (g.caption_to_image[j] >= num_images) {
      throw Error(ErrorCategory::Data, "ground truth: caption " + std::to_string(j) + " maps past the gallery");
    }
    g.image_to_captions[g.caption_to_image[j]].push_back(j);
  }
  return g;
}

namespace {

void rank_rows(const Matrix& scores, RankingResult& out) {
  const auto n = static_cast<std::size_t>(scores.cols());
  out.order.resize(static_cast<std::size_t>(scores.rows()));
  out.scores.resize(out.order.size());
  for (Eigen::Index q = 0; q < scores.rows(); ++q) {
    auto& order = out.order[static_cast<std::size_t>(q)];
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores(q, static_cast<Eigen::Index>(a)) > scores(q, static_cast<Eigen::Index>(b));
    });
    auto& s = out.scores[static_cast<std::size_t>(q)];
    s.resize(n);
    for (std::size_t r = 0; r < n; ++r) s[r] = scores(q, static_cast<Eigen::Index>(order[r]));
  }
}

}  // namespace

RankingResult rank_scores(const Matrix& image_caption_scores, Direction direction) {
  if (image_caption_scores.rows() == 0 || image_caption_scores.cols() == 0) {
    throw Error(ErrorCategory::Data, "rank_all: empty gallery");
  }
  RankingResult out;
  out.direction = direction;
  if (direction == Direction::ImageToText) {
    rank_rows(image_caption_scores, out);
  } else {
    rank_rows(image_caption_scores.transpose(), out);
  }
  return out;
}

RankingResult rank_all(const Matrix& images, const Matrix& captions, Direction direction) {
  if (images.rows() == 0 || captions.rows() == 0) throw Error(ErrorCategory::Data, "rank_all: empty gallery");
  if (images.cols() != captions.cols()) {
    throw Error(ErrorCategory::Shape,
                "rank_all: embedding widths differ (" + shape_string(images) + " vs " + shape_string(captions) + ")");
  }
  return rank_scores(images * captions.transpose(), direction);
}

DirectionalRecall recall_at_k(const RankingResult& ranking, const GroundTruth& truth,
                              const std::array<std::size_t, 3>& ks) {
  const bool i2t = ranking.direction == Direction::ImageToText;
  const auto expected = i2t ? truth.image_to_captions.size() : truth.caption_to_image.size();
  if (ranking.order.size() != expected) {
    throw Error(ErrorCategory::Data, "recall_at_k: " + std::to_string(ranking.order.size()) + " queries but ground truth covers " +
                                         std::to_string(expected));
  }
  std::array<std::size_t, 3> hits{};
  for (std::size_t q = 0; q < ranking.order.size(); ++q) {
    const auto& order = ranking.order[q];
    // Best (lowest) rank of any correct item.
    std::size_t best = order.size();
    for (std::size_t r = 0; r < order.size() && best == order.size(); ++r) {
      const bool correct = i2t ? truth.caption_to_image.at(order[r]) == q : truth.caption_to_image[q] == order[r];
      if (correct) best = r;
    }
    if (i2t && truth.image_to_captions[q].empty()) {
      throw Error(ErrorCategory::Data, "recall_at_k: image " + std::to_string(q) + " has no ground-truth caption");
    }
    for (std::size_t k = 0; k < ks.size(); ++k) {
      if (best < ks[k]) ++hits[k];
    }
  }
  DirectionalRecall out{};
  for (std::size_t k = 0; k < ks.size(); ++k) {
    out[k] = 100.0 * static_cast<double>(hits[k]) / static_cast<double>(ranking.order.size());
  }
  return out;
}

RecallReport make_report(const DirectionalRecall& i2t, const DirectionalRecall& t2i) {
  RecallReport r;
  r.i2t = i2t;
  r.t2i = t2i;
  r.r_sum = i2t[0] + i2t[1] + i2t[2] + t2i[0] + t2i[1] + t2i[2];
  return r;
}

RecallReport evaluate_recall(const RankingResult& i2t, const RankingResult& t2i, const GroundTruth& truth) {
  return make_report(recall_at_k(i2t, truth), recall_at_k(t2i, truth));
}

RankingResult hybrid_rerank_i2t(const RankingResult& base, const RankingResult& reverse, double gamma) {
  if (base.direction != Direction::ImageToText || reverse.direction != Direction::TextToImage) {
    throw Error(ErrorCategory::Data, "hybrid_rerank_i2t: expects an I2T base and a T2I reverse ranking");
  }
  if (!(gamma >= 0 && gamma <= 1)) throw Error(ErrorCategory::Data, "hybrid_rerank_i2t: gamma must lie in [0, 1]");
  const auto num_images = base.order.size();
  const auto num_captions = reverse.order.size();
  // rank_of[c][v]: 1-based position of image v in caption c's list
  std::vector<std::vector<std::size_t>> rank_of(num_captions, std::vector<std::size_t>(num_images, 0));
  for (std::size_t c = 0; c < num_captions; ++c) {
    if (reverse.order[c].size() != num_images) {
      throw Error(ErrorCategory::Data, "hybrid_rerank_i2t: reverse ranking gallery does not match base queries");
    }
    for (std::size_t r = 0; r < num_images; ++r) rank_of[c].at(reverse.order[c][r]) = r + 1;
  }

  RankingResult out;
  out.direction = Direction::ImageToText;
  out.order.resize(num_images);
  out.scores.resize(num_images);
  for (std::size_t v = 0; v < num_images; ++v) {
    const auto& order = base.order[v];
    const auto& sims = base.scores[v];
    if (order.size() != num_captions) {
      throw Error(ErrorCategory::Data, "hybrid_rerank_i2t: base ranking gallery does not match reverse queries");
    }
    const auto [lo_it, hi_it] = std::minmax_element(sims.begin(), sims.end());
    const double lo = *lo_it;
    const double span = *hi_it - lo;
    std::vector<double> fused(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      const double norm = span > 0 ? (sims[r] - lo) / span : 0.0;
      const double reciprocal = 1.0 / static_cast<double>(rank_of[order[r]][v]);
      fused[r] = gamma * norm + (1.0 - gamma) * reciprocal;
    }
    std::vector<std::size_t> pos(order.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return fused[a] > fused[b]; });
    out.order[v].reserve(pos.size());
    out.scores[v].reserve(pos.size());
    for (auto p : pos) {
      out.order[v].push_back(order[p]);
      out.scores[v].push_back(fused[p]);
    }
  }
  return out;
}

}  // namespace amsps
