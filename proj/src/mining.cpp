#include "amsps/mining.hpp"

#include <algorithm>
#include <numeric>

namespace amsps {

namespace {

// Indices of the `count` largest entries of `scores` that pass `keep`,
// ordered by descending score then ascending index.
template <typename Row, typename Keep>
std::vector<std::size_t> top_indices(const Row& scores, std::size_t count, Keep keep) {
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (keep(static_cast<std::size_t>(i))) idx.push_back(static_cast<std::size_t>(i));
  }
  const auto n = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = scores[static_cast<Eigen::Index>(a)];
                      const double sb = scores[static_cast<Eigen::Index>(b)];
                      return sa != sb ? sa > sb : a < b;
                    });
  idx.resize(n);
  return idx;
}

}  // namespace

PredictiveCandidates PredictiveCandidates::from_ownership(Matrix images, Matrix captions,
                                                          std::vector<std::size_t> caption_to_image) {
  PredictiveCandidates c;
  c.images = std::move(images);
  c.captions = std::move(captions);
  c.caption_to_image = std::move(caption_to_image);
  c.image_to_captions.assign(c.num_images(), {});
  for (std::size_t j = 0; j < c.caption_to_image.size(); ++j) {
    const auto img = c.caption_to_image[j];
    if (img >= c.num_images()) {
      throw Error(ErrorCategory::Data, "caption " + std::to_string(j) + " maps to image " + std::to_string(img) +
                                           " but only " + std::to_string(c.num_images()) + " images exist");
    }
    c.image_to_captions[img].push_back(j);
  }
  return c;
}

void validate(const PredictiveCandidates& c) {
  if (c.num_images() < 1 || c.num_captions() < 1) {
    throw Error(ErrorCategory::Data, "predictive candidates need at least one image and one caption");
  }
  if (c.images.cols() != c.captions.cols()) {
    throw Error(ErrorCategory::Shape, "predictive candidates: image rows " + shape_string(c.images) +
                                          " and caption rows " + shape_string(c.captions) + " differ in width");
  }
  if (c.caption_to_image.size() != c.num_captions() || c.image_to_captions.size() != c.num_images()) {
    throw Error(ErrorCategory::Data, "predictive candidates: ownership maps do not cover every row");
  }
  for (std::size_t j = 0; j < c.caption_to_image.size(); ++j) {
    const auto img = c.caption_to_image[j];
    if (img >= c.num_images()) throw Error(ErrorCategory::Data, "caption maps to a missing image");
    const auto& own = c.image_to_captions[img];
    if (std::find(own.begin(), own.end(), j) == own.end()) {
      throw Error(ErrorCategory::Data, "ownership maps disagree for caption " + std::to_string(j));
    }
  }
}

SimilarityMatrices build_similarity(const PredictiveCandidates& cands) {
  validate(cands);
  SimilarityMatrices s;
  s.caption_image = cands.captions * cands.images.transpose();
  s.image_caption = s.caption_image.transpose();
  return s;
}

TopPositionLists top_positions(const SimilarityMatrices& sim, const PredictiveCandidates& cands, std::size_t k,
                               std::size_t q) {
  const auto a = cands.num_images();
  const auto b = cands.num_captions();
  if (static_cast<std::size_t>(sim.caption_image.rows()) != b ||
      static_cast<std::size_t>(sim.caption_image.cols()) != a) {
    throw Error(ErrorCategory::Shape, "top_positions: similarity " + shape_string(sim.caption_image) +
                                          " does not match " + std::to_string(b) + " captions x " +
                                          std::to_string(a) + " images");
  }
  TopPositionLists lists;
  lists.k = k;
  lists.q = q;
  lists.image_top_captions.reserve(a);
  for (std::size_t i = 0; i < a; ++i) {
    const auto available = b - cands.image_to_captions[i].size();
    if (k == 0 || k > available) {
      throw Error(ErrorCategory::Data, "top_positions: k=" + std::to_string(k) + " but image " + std::to_string(i) +
                                           " has " + std::to_string(available) + " non-matching captions");
    }
    const auto col = sim.caption_image.col(static_cast<Eigen::Index>(i));
    lists.image_top_captions.push_back(
        top_indices(col, k, [&](std::size_t j) { return cands.caption_to_image[j] != i; }));
  }
  lists.caption_top_images.reserve(b);
  for (std::size_t j = 0; j < b; ++j) {
    const auto available = a - 1;
    if (q == 0 || q > available) {
      throw Error(ErrorCategory::Data, "top_positions: q=" + std::to_string(q) + " but caption " +
                                           std::to_string(j) + " has " + std::to_string(available) +
                                           " non-matching images");
    }
    const auto row = sim.caption_image.row(static_cast<Eigen::Index>(j));
    const auto own = cands.caption_to_image[j];
    lists.caption_top_images.push_back(top_indices(row, q, [&](std::size_t i) { return i != own; }));
  }
  return lists;
}

MinedQuadruple draw_quadruple(const TopPositionLists& lists, const PredictiveCandidates& cands,
                              std::size_t anchor_image, std::size_t anchor_caption, std::mt19937_64& rng) {
  if (anchor_image >= lists.image_top_captions.size() || anchor_caption >= lists.caption_top_images.size()) {
    throw Error(ErrorCategory::Data, "draw_quadruple: anchor outside the mined lists");
  }
  if (cands.caption_to_image.at(anchor_caption) != anchor_image) {
    throw Error(ErrorCategory::Data, "draw_quadruple: caption " + std::to_string(anchor_caption) +
                                         " does not belong to image " + std::to_string(anchor_image));
  }
  const auto& captions = lists.image_top_captions[anchor_image];
  const auto& images = lists.caption_top_images[anchor_caption];
  if (captions.empty() || images.empty()) throw Error(ErrorCategory::Data, "draw_quadruple: empty top list");

  std::uniform_int_distribution<std::size_t> pick_caption(0, captions.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_image(0, images.size() - 1);
  MinedQuadruple m;
  m.anchor_image = anchor_image;
  m.anchor_caption = anchor_caption;
  m.t_bar = captions[pick_caption(rng)];
  m.v_bar = images[pick_image(rng)];
  const auto& partner_captions = cands.image_to_captions.at(m.v_bar);
  if (partner_captions.empty()) {
    throw Error(ErrorCategory::Data, "draw_quadruple: image " + std::to_string(m.v_bar) + " has no captions");
  }
  m.t_dbar = partner_captions.front();
  m.v_dbar = cands.caption_to_image.at(m.t_bar);
  return m;
}

MinedQuadruple draw_quadruple(const TopPositionLists& lists, const PredictiveCandidates& cands,
                              std::size_t anchor_image, std::size_t anchor_caption, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return draw_quadruple(lists, cands, anchor_image, anchor_caption, rng);
}

}  // namespace amsps
