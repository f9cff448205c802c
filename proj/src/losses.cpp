#include "amsps/losses.hpp"

#include <algorithm>
#include <numeric>

namespace amsps {

double triplet_anchor(const AnchorScores& s, double delta1) {
  return hinge(delta1 - s.positive + s.v_tneg) + hinge(delta1 - s.positive + s.vneg_t);
}

HingeTriple hier_loss_fv(const AnchorScores& s, double delta_v, double delta2) {
  return {hinge(delta_v - s.positive + s.v_tneg), hinge(delta2 - s.positive + s.v_tbar),
          hinge(delta2 - s.positive + s.vbar_tbar)};
}

HingeTriple hier_loss_ft(const AnchorScores& s, double delta_t, double delta2) {
  return {hinge(delta_t - s.positive + s.vneg_t), hinge(delta2 - s.positive + s.vbar_t),
          hinge(delta2 - s.positive + s.pair_term)};
}

PenaltyWeights penalty_weights(double s_v_tbar, double s_v_tneg, double s_vbar_t, double s_vneg_t, double tau,
                               double mu) {
  if (!(mu > 0)) throw Error(ErrorCategory::Data, "penalty_weights: mu must be positive");
  PenaltyWeights w;
  w.tau = tau;
  w.mu = mu;
  w.w1 = std::clamp(tau - (s_v_tbar - s_v_tneg) / mu, 0.0, std::max(tau, 0.0));
  w.w2 = std::clamp(tau - (s_vbar_t - s_vneg_t) / mu, 0.0, std::max(tau, 0.0));
  return w;
}

namespace {

void check_batch(const BatchSimilarities& batch) {
  if (batch.scores.rows() != batch.scores.cols()) {
    throw Error(ErrorCategory::Shape, "loss: similarity matrix must be square, got " + shape_string(batch.scores));
  }
  if (batch.size() < 2) throw Error(ErrorCategory::Data, "loss: batch needs at least 2 pairs to form negatives");
  if (!batch.image_group.empty() && batch.image_group.size() != batch.size()) {
    throw Error(ErrorCategory::Data, "loss: image_group size does not match batch");
  }
}

bool is_negative(const BatchSimilarities& batch, std::size_t i, std::size_t j) {
  if (i == j) return false;
  return batch.image_group.empty() || batch.image_group[i] != batch.image_group[j];
}

struct AnchorContext {
  const BatchSimilarities& batch;
  const LossOptions& opts;
  LossBreakdown& out;
};

// Value of [margin − S_ii + S_neg]₊ routed into d_scores for a matrix negative.
double matrix_hinge(AnchorContext& ctx, std::size_t i, std::size_t row, std::size_t col, double margin,
                    double coef) {
  const double v = hinge(margin - ctx.batch.scores(i, i) + ctx.batch.scores(row, col));
  if (v > 0) {
    ctx.out.d_scores(i, i) -= coef;
    ctx.out.d_scores(row, col) += coef;
  }
  return v;
}

// In-batch caption-side hinge for anchor i under the configured negative mode.
double caption_side(AnchorContext& ctx, std::size_t i, double margin, double coef) {
  if (ctx.opts.negatives == NegativeMode::Hardest) {
    return matrix_hinge(ctx, i, i, ctx.out.negatives[i].caption, margin, coef);
  }
  double total = 0;
  for (std::size_t j = 0; j < ctx.batch.size(); ++j) {
    if (is_negative(ctx.batch, i, j)) total += matrix_hinge(ctx, i, i, j, margin, coef);
  }
  return total;
}

double image_side(AnchorContext& ctx, std::size_t i, double margin, double coef) {
  if (ctx.opts.negatives == NegativeMode::Hardest) {
    return matrix_hinge(ctx, i, ctx.out.negatives[i].image, i, margin, coef);
  }
  double total = 0;
  for (std::size_t j = 0; j < ctx.batch.size(); ++j) {
    if (is_negative(ctx.batch, i, j)) total += matrix_hinge(ctx, i, j, i, margin, coef);
  }
  return total;
}

double mined_hinge(AnchorContext& ctx, std::size_t i, double score, double margin, double coef, double& d_score) {
  const double v = hinge(margin - ctx.batch.scores(i, i) + score);
  if (v > 0) {
    ctx.out.d_scores(i, i) -= coef;
    d_score += coef;
  }
  return v;
}

LossBreakdown start(const BatchSimilarities& batch, const LossOptions& opts) {
  LossBreakdown out;
  out.delta2 = opts.delta2;
  out.negatives = hardest_negatives(batch);
  const auto b = batch.size();
  out.per_term.assign(b, AnchorTerms{});
  out.w1.assign(b, 1.0);
  out.w2.assign(b, 1.0);
  out.delta_v.assign(b, opts.delta1);
  out.delta_t.assign(b, opts.delta1);
  out.d_scores = Matrix::Zero(batch.scores.rows(), batch.scores.cols());
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<NegativeChoice> hardest_negatives(const BatchSimilarities& batch) {
  check_batch(batch);
  const auto b = batch.size();
  std::vector<NegativeChoice> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    bool found_caption = false;
    bool found_image = false;
    for (std::size_t j = 0; j < b; ++j) {
      if (!is_negative(batch, i, j)) continue;
      if (!found_caption || batch.scores(i, j) > batch.scores(i, out[i].caption)) {
        out[i].caption = j;
        found_caption = true;
      }
      if (!found_image || batch.scores(j, i) > batch.scores(out[i].image, i)) {
        out[i].image = j;
        found_image = true;
      }
    }
    if (!found_caption || !found_image) {
      throw Error(ErrorCategory::Data, "loss: anchor " + std::to_string(i) + " has no in-batch negative");
    }
  }
  return out;
}

double LossBreakdown::mean_term(std::size_t k) const {
  if (per_term.empty()) return 0;
  double s = 0;
  for (const auto& t : per_term) s += t.at(k);
  return s / static_cast<double>(per_term.size());
}
double LossBreakdown::mean_w1() const { return mean_of(w1); }
double LossBreakdown::mean_w2() const { return mean_of(w2); }
double LossBreakdown::mean_delta_v() const { return mean_of(delta_v); }
double LossBreakdown::mean_delta_t() const { return mean_of(delta_t); }

LossBreakdown triplet_loss(const BatchSimilarities& batch, const LossOptions& opts) {
  LossBreakdown out = start(batch, opts);
  AnchorContext ctx{batch, opts, out};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& terms = out.per_term[i];
    terms[0] = caption_side(ctx, i, opts.delta1, 1.0);
    terms[3] = image_side(ctx, i, opts.delta1, 1.0);
    out.total += terms[0] + terms[3];
  }
  return out;
}

LossBreakdown ahrl_total(const BatchSimilarities& batch, const std::vector<AdaptiveMargins>& margins,
                         const LossOptions& opts, const std::vector<PenaltyWeights>* frozen_weights) {
  LossBreakdown out = start(batch, opts);
  const auto b = batch.size();
  if (batch.mined.size() != b) {
    throw Error(ErrorCategory::Data, "ahrl: mined similarities missing (" + std::to_string(batch.mined.size()) +
                                         " for " + std::to_string(b) + " anchors)");
  }
  if (margins.size() != b) {
    throw Error(ErrorCategory::Data, "ahrl: " + std::to_string(margins.size()) + " margins for " +
                                         std::to_string(b) + " anchors");
  }
  if (frozen_weights != nullptr && frozen_weights->size() != b) {
    throw Error(ErrorCategory::Data, "ahrl: frozen weights do not match batch");
  }
  out.d_mined.assign(b, MinedSimilarities{});
  AnchorContext ctx{batch, opts, out};
  for (std::size_t i = 0; i < b; ++i) {
    const auto& mined = batch.mined[i];
    const auto& neg = out.negatives[i];
    const PenaltyWeights w =
        frozen_weights != nullptr
            ? (*frozen_weights)[i]
            : penalty_weights(mined.v_tbar, batch.scores(i, neg.caption), mined.vbar_t, batch.scores(neg.image, i),
                              opts.tau, opts.mu);
    out.w1[i] = w.w1;
    out.w2[i] = w.w2;
    out.delta_v[i] = margins[i].delta_v;
    out.delta_t[i] = margins[i].delta_t;

    auto& d = out.d_mined[i];
    auto& terms = out.per_term[i];
    terms[0] = caption_side(ctx, i, margins[i].delta_v, w.w1);
    terms[1] = mined_hinge(ctx, i, mined.v_tbar, opts.delta2, w.w1, d.v_tbar);
    terms[2] = mined_hinge(ctx, i, mined.vbar_tbar, opts.delta2, w.w1, d.vbar_tbar);
    terms[3] = image_side(ctx, i, margins[i].delta_t, w.w2);
    terms[4] = mined_hinge(ctx, i, mined.vbar_t, opts.delta2, w.w2, d.vbar_t);
    terms[5] = mined_hinge(ctx, i, mined.pair_term, opts.delta2, w.w2, d.pair_term);
    out.total += w.w1 * (terms[0] + terms[1] + terms[2]) + w.w2 * (terms[3] + terms[4] + terms[5]);
  }
  return out;
}

LossBreakdown hrl_total(const BatchSimilarities& batch, const LossOptions& opts,
                        const std::vector<PenaltyWeights>* frozen_weights) {
  std::vector<AdaptiveMargins> fixed(batch.size(), AdaptiveMargins{opts.delta1, opts.delta1, 0.0});
  return ahrl_total(batch, fixed, opts, frozen_weights);
}

BatchSimilarities batch_similarities(const BatchEmbeddings& emb, AuxPairMapping mapping) {
  require_same_shape(emb.images, emb.captions, "batch_similarities");
  BatchSimilarities batch;
  batch.scores = emb.images * emb.captions.transpose();
  batch.image_group = emb.image_group;
  if (emb.has_mined()) {
    const auto b = emb.images.rows();
    for (const Matrix* m : {&emb.neg_captions, &emb.neg_images, &emb.partner_images, &emb.partner_captions}) {
      if (m->rows() != b || m->cols() != emb.images.cols()) {
        throw Error(ErrorCategory::Shape, "batch_similarities: mined rows " + shape_string(*m) +
                                              " do not match anchors " + shape_string(emb.images));
      }
    }
    batch.mined.resize(static_cast<std::size_t>(b));
    for (Eigen::Index i = 0; i < b; ++i) {
      auto& m = batch.mined[static_cast<std::size_t>(i)];
      m.v_tbar = emb.images.row(i).dot(emb.neg_captions.row(i));
      m.vbar_t = emb.neg_images.row(i).dot(emb.captions.row(i));
      m.vbar_tbar = emb.neg_images.row(i).dot(emb.neg_captions.row(i));
      const auto& pair_image = mapping == AuxPairMapping::Partners ? emb.partner_images : emb.neg_images;
      m.pair_term = pair_image.row(i).dot(emb.partner_captions.row(i));
    }
  }
  return batch;
}

EmbeddingGrads backprop_similarities(const BatchEmbeddings& emb, const LossBreakdown& loss, AuxPairMapping mapping) {
  require_same_shape(loss.d_scores, Matrix(emb.images.rows(), emb.captions.rows()), "backprop_similarities");
  EmbeddingGrads g;
  g.images = loss.d_scores * emb.captions;
  g.captions = loss.d_scores.transpose() * emb.images;
  if (!emb.has_mined()) return g;
  g.neg_captions = Matrix::Zero(emb.neg_captions.rows(), emb.neg_captions.cols());
  g.neg_images = Matrix::Zero(emb.neg_images.rows(), emb.neg_images.cols());
  g.partner_images = Matrix::Zero(emb.partner_images.rows(), emb.partner_images.cols());
  g.partner_captions = Matrix::Zero(emb.partner_captions.rows(), emb.partner_captions.cols());
  if (loss.d_mined.size() != static_cast<std::size_t>(emb.images.rows())) {
    throw Error(ErrorCategory::Data, "backprop_similarities: loss carries no mined gradients");
  }
  for (Eigen::Index i = 0; i < emb.images.rows(); ++i) {
    const auto& d = loss.d_mined[static_cast<std::size_t>(i)];
    g.images.row(i) += d.v_tbar * emb.neg_captions.row(i);
    g.neg_captions.row(i) += d.v_tbar * emb.images.row(i);
    g.neg_images.row(i) += d.vbar_t * emb.captions.row(i);
    g.captions.row(i) += d.vbar_t * emb.neg_images.row(i);
    g.neg_images.row(i) += d.vbar_tbar * emb.neg_captions.row(i);
    g.neg_captions.row(i) += d.vbar_tbar * emb.neg_images.row(i);
    auto& pair_image_grad = mapping == AuxPairMapping::Partners ? g.partner_images : g.neg_images;
    const auto& pair_image = mapping == AuxPairMapping::Partners ? emb.partner_images : emb.neg_images;
    pair_image_grad.row(i) += d.pair_term * emb.partner_captions.row(i);
    g.partner_captions.row(i) += d.pair_term * pair_image.row(i);
  }
  return g;
}

}  // namespace amsps
