#include "amsps/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace amsps {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent deterministic streams for initialization, shuffling and mining.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kMiningStream = 3;

Matrix stack_rows(const std::vector<Vector>& rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

std::vector<CaptionRef> reference_set(const TrainingData& td, std::size_t image) {
  const auto& data = td.dataset();
  std::vector<CaptionRef> refs;
  for (auto c : data.image_captions.at(image)) refs.push_back({data.captions[c].id, data.captions[c].words});
  return refs;
}

StepMetrics metrics_from(const LossBreakdown& loss, const ModelState& state) {
  StepMetrics m;
  m.step = state.step;
  m.phase = state.phase;
  m.epoch = state.epoch;
  m.total = loss.total;
  for (std::size_t k = 0; k < m.terms.size(); ++k) m.terms[k] = loss.mean_term(k);
  m.w1 = loss.mean_w1();
  m.w2 = loss.mean_w2();
  m.delta_v = loss.mean_delta_v();
  m.delta_t = loss.mean_delta_t();
  return m;
}

void apply_update(ModelState& state, BatchResult& result, const TrainConfig& config, double lr) {
  if (!std::isfinite(result.loss.total)) {
    throw Error(ErrorCategory::Numeric, "training: non-finite loss at step " + std::to_string(state.step + 1));
  }
  if (!all_finite(result.grads)) {
    throw Error(ErrorCategory::Numeric, "training: non-finite gradient at step " + std::to_string(state.step + 1));
  }
  clip_global_norm(result.grads, config.grad_clip);
  optimizer_step(state, result.grads, lr, config.optimizer_kind());
}

// A non-finite value inside the forward pass (e.g. a row that cannot be
// normalized) is reported like a non-finite loss, with the step it hit.
template <typename F>
BatchResult guarded_batch(const ModelState& state, F&& compute) {
  try {
    return compute();
  } catch (const Error& e) {
    if (e.category() != ErrorCategory::Numeric) throw;
    throw Error(ErrorCategory::Numeric,
                "training: non-finite loss at step " + std::to_string(state.step + 1) + " (" + e.what() + ")");
  }
}

// Forward pass for one row of a batch; kept so the backward pass can reuse it.
struct ImageRow {
  std::size_t image;
  ImageForward fwd;
};

struct CaptionRow {
  std::size_t caption;
  CaptionForward fwd;
};

ImageRow forward_image(const ModelParams& p, const TrainingData& td, std::size_t image, const ConsensusOptions& o) {
  return {image, embed_image_cached(td.dataset().images[image].regions, p, td.dataset().corpus, o)};
}

CaptionRow forward_caption(const ModelParams& p, const TrainingData& td, std::size_t caption,
                           const ConsensusOptions& o) {
  return {caption, embed_caption_cached(td.tokens[caption], td.labels[caption], p, td.dataset().corpus, o)};
}

Matrix outputs(const std::vector<ImageRow>& rows) {
  std::vector<Vector> v;
  for (const auto& r : rows) v.push_back(r.fwd.output());
  return stack_rows(v);
}

Matrix outputs(const std::vector<CaptionRow>& rows) {
  std::vector<Vector> v;
  for (const auto& r : rows) v.push_back(r.fwd.output());
  return stack_rows(v);
}

void backward_rows(const std::vector<ImageRow>& rows, const Matrix& d, const ModelParams& p, const TrainingData& td,
                   const ConsensusOptions& o, ModelParams& grads) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector g = d.row(static_cast<Eigen::Index>(i)).transpose();
    if (g.isZero(0.0)) continue;
    embed_image_backward(td.dataset().images[rows[i].image].regions, rows[i].fwd, g, p, td.dataset().corpus, o, grads);
  }
}

void backward_rows(const std::vector<CaptionRow>& rows, const Matrix& d, const ModelParams& p, const TrainingData& td,
                   const ConsensusOptions& o, ModelParams& grads) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector g = d.row(static_cast<Eigen::Index>(i)).transpose();
    if (g.isZero(0.0)) continue;
    embed_caption_backward(rows[i].fwd, g, p, td.dataset().corpus, o, grads);
  }
}

}  // namespace

TrainingData prepare_training_data(const Dataset& data, const std::vector<std::string>* vocabulary) {
  TrainingData td;
  td.data = &data;
  td.train = make_split_view(data, data.train);
  if (vocabulary != nullptr) {
    td.vocab = Vocabulary(*vocabulary);
  } else {
    std::vector<Words> sentences;
    for (auto c : td.train.captions) sentences.push_back(data.captions[c].words);
    td.vocab = Vocabulary::from_sentences(sentences);
  }
  td.tokens.reserve(data.captions.size());
  td.labels.reserve(data.captions.size());
  for (const auto& c : data.captions) {
    td.tokens.push_back(td.vocab.encode(c.words));
    td.labels.push_back(make_concept_label(c.words, data.corpus));
  }
  std::vector<std::vector<Words>> docs;
  for (auto img : data.train) {
    std::vector<Words> refs;
    for (auto c : data.image_captions[img]) refs.push_back(data.captions[c].words);
    docs.push_back(std::move(refs));
  }
  if (!docs.empty()) td.idf = IdfTable::build(docs);
  return td;
}

ModelDims model_dims(const TrainConfig& config, const TrainingData& td) {
  ModelDims d;
  d.feature_dim = td.dataset().feature_dim();
  d.embed_dim = static_cast<Eigen::Index>(config.embed_dim);
  d.word_dim = static_cast<Eigen::Index>(config.word_dim);
  d.vocab_size = static_cast<Eigen::Index>(td.vocab.size());
  if (td.dataset().corpus.dim() != d.embed_dim) {
    throw Error(ErrorCategory::Shape, "corpus width " + std::to_string(td.dataset().corpus.dim()) +
                                          " differs from embed_dim " + std::to_string(d.embed_dim));
  }
  return d;
}

ModelState init_state(const TrainConfig& config, const TrainingData& td) {
  std::mt19937_64 rng(stream_seed(config.seed, kInitStream));
  ModelState s = make_state(init_model(model_dims(config, td), rng));
  s.phase = 1;
  return s;
}

std::string metrics_header() {
  return "step\tphase\tepoch\ttotal\tfv1\tfv2\tfv3\tft1\tft2\tft3\tw1\tw2\tdelta_v\tdelta_t\n";
}

std::string format_metrics(const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%llu\t%d\t%llu\t%.9f\t%.9f\t%.9f\t%.9f\t%.9f\t%.9f\t%.9f\t%.6f\t%.6f\t%.6f\t%.6f\n",
                static_cast<unsigned long long>(m.step), m.phase, static_cast<unsigned long long>(m.epoch), m.total,
                m.terms[0], m.terms[1], m.terms[2], m.terms[3], m.terms[4], m.terms[5], m.w1, m.w2, m.delta_v,
                m.delta_t);
  return buf;
}

// --- mining ---------------------------------------------------------------------

const MinedQuadruple& MiningPlan::at(std::size_t caption) const {
  if (caption >= by_caption.size() || by_caption[caption] == npos) {
    throw Error(ErrorCategory::Data, "mining: no mined quadruple for caption " + std::to_string(caption));
  }
  return records[by_caption[caption]];
}

PredictiveCandidates predictive_from_model(const ModelParams& params, const TrainingData& td,
                                           const ConsensusOptions& opts) {
  SplitEmbeddings emb = embed_split(params, td, td.dataset().train, opts);
  return PredictiveCandidates::from_ownership(std::move(emb.images), std::move(emb.captions),
                                              emb.view.caption_to_local_image);
}

PredictiveCandidates predictive_from_files(const std::filesystem::path& images, const std::filesystem::path& captions,
                                           const TrainingData& td) {
  Matrix img = load_matrix(images);
  Matrix cap = load_matrix(captions);
  const auto& view = td.train;
  if (static_cast<std::size_t>(img.rows()) != view.images.size() ||
      static_cast<std::size_t>(cap.rows()) != view.captions.size()) {
    throw Error(ErrorCategory::Shape, "predictive candidates: expected " + std::to_string(view.images.size()) +
                                          " image rows and " + std::to_string(view.captions.size()) +
                                          " caption rows, got " + shape_string(img) + " and " + shape_string(cap));
  }
  return PredictiveCandidates::from_ownership(normalize_rows(img), normalize_rows(cap), view.caption_to_local_image);
}

std::uint64_t mining_seed(std::uint64_t seed, std::uint64_t epoch) { return stream_seed(seed, kMiningStream, epoch); }

MiningPlan mine_hard_negatives(const PredictiveCandidates& predictive, const TrainingData& td, std::size_t k,
                               std::size_t q, std::size_t a, std::uint64_t seed) {
  validate(predictive);
  const auto& view = td.train;
  if (predictive.num_images() != view.images.size() || predictive.num_captions() != view.captions.size()) {
    throw Error(ErrorCategory::Shape, "mining: predictive candidates do not cover the train split");
  }
  if (a < 2) throw Error(ErrorCategory::Usage, "mining: chunk size a must be at least 2");

  // Chunk boundaries over local image indices.
  const std::size_t n = view.images.size();
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  for (std::size_t start = 0; start < n; start += a) chunks.emplace_back(start, std::min(n, start + a));
  if (chunks.size() > 1 && chunks.back().second - chunks.back().first < a) {
    chunks[chunks.size() - 2].second = chunks.back().second;
    chunks.pop_back();
  }

  MiningPlan plan;
  plan.by_caption.assign(td.dataset().captions.size(), MiningPlan::npos);
  std::mt19937_64 rng(seed);
  for (const auto& [lo, hi] : chunks) {
    std::vector<std::size_t> caps;  // local caption indices in this chunk
    for (std::size_t c = 0; c < view.captions.size(); ++c) {
      const auto img = view.caption_to_local_image[c];
      if (img >= lo && img < hi) caps.push_back(c);
    }
    Matrix images = predictive.images.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo));
    Matrix captions(static_cast<Eigen::Index>(caps.size()), predictive.captions.cols());
    std::vector<std::size_t> owner;
    for (std::size_t j = 0; j < caps.size(); ++j) {
      captions.row(static_cast<Eigen::Index>(j)) = predictive.captions.row(static_cast<Eigen::Index>(caps[j]));
      owner.push_back(view.caption_to_local_image[caps[j]] - lo);
    }
    const auto cands = PredictiveCandidates::from_ownership(std::move(images), std::move(captions), std::move(owner));
    const auto lists = top_positions(build_similarity(cands), cands, k, q);
    for (std::size_t j = 0; j < caps.size(); ++j) {
      const auto local = draw_quadruple(lists, cands, cands.caption_to_image[j], j, rng);
      auto image_of = [&](std::size_t chunk_image) { return view.images[lo + chunk_image]; };
      auto caption_of = [&](std::size_t chunk_caption) { return view.captions[caps[chunk_caption]]; };
      MinedQuadruple q4;
      q4.anchor_image = image_of(local.anchor_image);
      q4.anchor_caption = caption_of(local.anchor_caption);
      q4.t_bar = caption_of(local.t_bar);
      q4.v_bar = image_of(local.v_bar);
      q4.t_dbar = caption_of(local.t_dbar);
      q4.v_dbar = image_of(local.v_dbar);
      plan.by_caption[q4.anchor_caption] = plan.records.size();
      plan.records.push_back(q4);
    }
  }
  return plan;
}

// --- CIDEr cache ------------------------------------------------------------------

double PhiCache::phi(std::size_t image, std::size_t caption) {
  const auto key = std::make_pair(image, caption);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const auto& data = td_->dataset();
  const auto refs = reference_set(*td_, image);
  double value = 0;
  if (data.captions.at(caption).image == image) {
    value = leave_one_out_cider(refs, {data.captions[caption].id, data.captions[caption].words}, td_->idf);
  } else {
    std::vector<Words> words;
    for (const auto& r : refs) words.push_back(r.words);
    value = cider_score(data.captions[caption].words, words, td_->idf).value;
  }
  cache_.emplace(key, value);
  return value;
}

// --- batches ----------------------------------------------------------------------

BatchResult phase1_batch(const ModelParams& params, const TrainingData& td, const std::vector<std::size_t>& anchors,
                         const TrainConfig& config) {
  const auto opts = config.consensus_options();
  const auto& data = td.dataset();
  std::vector<ImageRow> images;
  std::vector<CaptionRow> captions;
  BatchEmbeddings emb;
  for (auto c : anchors) {
    images.push_back(forward_image(params, td, data.captions[c].image, opts));
    captions.push_back(forward_caption(params, td, c, opts));
    emb.image_group.push_back(data.captions[c].image);
  }
  emb.images = outputs(images);
  emb.captions = outputs(captions);

  BatchResult r;
  const auto mapping = config.aux_mapping();
  r.loss = triplet_loss(batch_similarities(emb, mapping), config.loss_options());
  const auto g = backprop_similarities(emb, r.loss, mapping);
  r.grads = zeros_like(params);
  backward_rows(images, g.images, params, td, opts, r.grads);
  backward_rows(captions, g.captions, params, td, opts, r.grads);
  return r;
}

BatchResult phase2_batch(const ModelParams& params, const TrainingData& td, const std::vector<std::size_t>& anchors,
                         const MiningPlan& plan, PhiCache& phi, const TrainConfig& config,
                         const std::vector<PenaltyWeights>* frozen_weights) {
  const auto opts = config.consensus_options();
  const auto& data = td.dataset();
  std::vector<ImageRow> images, neg_images, partner_images;
  std::vector<CaptionRow> captions, neg_captions, partner_captions;
  BatchEmbeddings emb;
  for (auto c : anchors) {
    const auto& q = plan.at(c);
    images.push_back(forward_image(params, td, q.anchor_image, opts));
    captions.push_back(forward_caption(params, td, c, opts));
    neg_captions.push_back(forward_caption(params, td, q.t_bar, opts));
    neg_images.push_back(forward_image(params, td, q.v_bar, opts));
    partner_images.push_back(forward_image(params, td, q.v_dbar, opts));
    partner_captions.push_back(forward_caption(params, td, q.t_dbar, opts));
    emb.image_group.push_back(q.anchor_image);
  }
  emb.images = outputs(images);
  emb.captions = outputs(captions);
  emb.neg_captions = outputs(neg_captions);
  emb.neg_images = outputs(neg_images);
  emb.partner_images = outputs(partner_images);
  emb.partner_captions = outputs(partner_captions);

  const auto mapping = config.aux_mapping();
  const auto batch = batch_similarities(emb, mapping);
  const auto negatives = hardest_negatives(batch);
  const auto margin_opts = config.margin_options();
  std::vector<AdaptiveMargins> margins;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto image = data.captions[anchors[i]].image;
    const double pos = phi.phi(image, anchors[i]);
    const auto neg_caption = anchors[negatives[i].caption];
    const auto neg_image = data.captions[anchors[negatives[i].image]].image;
    const auto neg_partner = data.image_captions.at(neg_image).front();
    AdaptiveMargins m;
    m.beta = margin_opts.beta;
    m.delta_v = margin_from_scores(pos, phi.phi(image, neg_caption), margin_opts);
    m.delta_t = margin_from_scores(pos, phi.phi(image, neg_partner), margin_opts);
    margins.push_back(m);
  }

  BatchResult r;
  r.loss = ahrl_total(batch, margins, config.loss_options(), frozen_weights);
  const auto g = backprop_similarities(emb, r.loss, mapping);
  r.grads = zeros_like(params);
  backward_rows(images, g.images, params, td, opts, r.grads);
  backward_rows(captions, g.captions, params, td, opts, r.grads);
  backward_rows(neg_captions, g.neg_captions, params, td, opts, r.grads);
  backward_rows(neg_images, g.neg_images, params, td, opts, r.grads);
  backward_rows(partner_images, g.partner_images, params, td, opts, r.grads);
  backward_rows(partner_captions, g.partner_captions, params, td, opts, r.grads);
  return r;
}

std::vector<std::vector<std::size_t>> epoch_batches(const TrainingData& td, std::size_t batch_size,
                                                    std::uint64_t seed, int phase, std::uint64_t epoch) {
  if (batch_size < 2) throw Error(ErrorCategory::Usage, "batch_size must be at least 2");
  std::vector<std::size_t> order = td.train.captions;
  std::mt19937_64 rng(stream_seed(seed, kShuffleStream, (static_cast<std::uint64_t>(phase) << 32) | epoch));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto end = std::min(order.size(), start + batch_size);
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

ModelState run_phase1(const TrainConfig& config, const TrainingData& td, ModelState state, const MetricsSink& sink) {
  validate(config);
  if (state.phase != 1) throw Error(ErrorCategory::Usage, "run_phase1: state is already in phase 2");
  for (; state.epoch < config.epochs_phase1; ++state.epoch) {
    for (const auto& batch : epoch_batches(td, config.batch_size, config.seed, 1, state.epoch)) {
      BatchResult r = guarded_batch(state, [&] { return phase1_batch(state.params, td, batch, config); });
      apply_update(state, r, config, config.phase1_lr);
      if (sink) sink(metrics_from(r.loss, state));
    }
  }
  return state;
}

ModelState run_phase2(const TrainConfig& config, const TrainingData& td, ModelState state,
                      const PredictiveCandidates& predictive, const MetricsSink& sink) {
  validate(config);
  if (td.train.images.empty()) throw Error(ErrorCategory::Data, "run_phase2: the train split is empty");
  if (state.phase == 1) {
    state.phase = 2;
    state.epoch = 0;
  }
  const auto opts = config.consensus_options();
  PhiCache phi(td);
  std::optional<MiningPlan> plan;
  for (; state.epoch < config.epochs_phase2; ++state.epoch) {
    if (!plan || config.refresh() == MiningRefresh::Epoch) {
      const auto seed = mining_seed(config.seed, config.refresh() == MiningRefresh::Epoch ? state.epoch : 0);
      if (plan && config.refresh() == MiningRefresh::Epoch) {
        plan = mine_hard_negatives(predictive_from_model(state.params, td, opts), td, config.k, config.q, config.a,
                                   seed);
      } else {
        plan = mine_hard_negatives(predictive, td, config.k, config.q, config.a, seed);
      }
    }
    for (const auto& batch : epoch_batches(td, config.batch_size, config.seed, 2, state.epoch)) {
      BatchResult r =
          guarded_batch(state, [&] { return phase2_batch(state.params, td, batch, *plan, phi, config); });
      apply_update(state, r, config, config.phase2_lr);
      if (sink) sink(metrics_from(r.loss, state));
    }
  }
  return state;
}

// --- evaluation -------------------------------------------------------------------

SplitEmbeddings embed_split(const ModelParams& params, const TrainingData& td, const std::vector<std::size_t>& images,
                            const ConsensusOptions& opts) {
  const auto& data = td.dataset();
  SplitEmbeddings out;
  out.view = make_split_view(data, images);
  std::vector<Vector> img_rows, cap_rows;
  for (auto i : out.view.images) img_rows.push_back(embed_image(data.images[i].regions, params, data.corpus, opts));
  for (auto c : out.view.captions) {
    cap_rows.push_back(embed_caption(td.tokens[c], td.labels[c], params, data.corpus, opts));
  }
  out.images = stack_rows(img_rows);
  out.captions = stack_rows(cap_rows);
  return out;
}

SplitRankings rank_split(const SplitEmbeddings& emb, bool rerank, double gamma) {
  SplitRankings r;
  r.truth = GroundTruth::from_ownership(emb.view.caption_to_local_image, emb.view.images.size());
  r.i2t = rank_all(emb.images, emb.captions, Direction::ImageToText);
  r.t2i = rank_all(emb.images, emb.captions, Direction::TextToImage);
  if (rerank) r.i2t = hybrid_rerank_i2t(r.i2t, r.t2i, gamma);
  return r;
}

RecallReport evaluate_split(const ModelParams& params, const TrainingData& td, Split split,
                            const ConsensusOptions& opts, bool rerank, double gamma) {
  const auto emb = embed_split(params, td, td.dataset().split(split), opts);
  if (emb.view.images.empty()) throw Error(ErrorCategory::Data, "evaluation: split has no images");
  const auto r = rank_split(emb, rerank, gamma);
  return evaluate_recall(r.i2t, r.t2i, r.truth);
}

}  // namespace amsps
