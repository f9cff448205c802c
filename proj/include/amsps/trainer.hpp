#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "amsps/cider.hpp"
#include "amsps/config.hpp"
#include "amsps/dataio.hpp"
#include "amsps/evaluation.hpp"
#include "amsps/losses.hpp"
#include "amsps/mining.hpp"
#include "amsps/optimizer.hpp"
#include "amsps/text.hpp"

namespace amsps {

/// Dataset-derived inputs that stay fixed for a run.
struct TrainingData {
  const Dataset* data = nullptr;
  Vocabulary vocab;
  std::vector<std::vector<int>> tokens;  // per dataset caption
  std::vector<ConceptLabel> labels;      // per dataset caption
  IdfTable idf;                          // document = one train image's captions
  SplitView train;

  const Dataset& dataset() const { return *data; }
};

/// Vocabulary from the train captions unless one is supplied (e.g. from a
/// checkpoint).
TrainingData prepare_training_data(const Dataset& data, const std::vector<std::string>* vocabulary = nullptr);

ModelDims model_dims(const TrainConfig& config, const TrainingData& td);
ModelState init_state(const TrainConfig& config, const TrainingData& td);

// --- metrics log --------------------------------------------------------------

struct StepMetrics {
  std::uint64_t step = 0;
  int phase = 1;
  std::uint64_t epoch = 0;
  double total = 0;
  std::array<double, 6> terms{};  // fv1 fv2 fv3 ft1 ft2 ft3, means over anchors
  double w1 = 0, w2 = 0;
  double delta_v = 0, delta_t = 0;
};

std::string metrics_header();
/// Tab-separated, fixed decimals, newline-terminated.
std::string format_metrics(const StepMetrics& m);

using MetricsSink = std::function<void(const StepMetrics&)>;

// --- mining -------------------------------------------------------------------

/// Mined quadruples in dataset indices, one per train caption.
struct MiningPlan {
  std::vector<MinedQuadruple> records;
  std::vector<std::size_t> by_caption;  // dataset caption → record, npos if none

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  const MinedQuadruple& at(std::size_t caption) const;
};

/// Train-split embeddings of the given model (rows follow td.train).
PredictiveCandidates predictive_from_model(const ModelParams& params, const TrainingData& td,
                                           const ConsensusOptions& opts);
/// External embeddings: one row per train image and per train caption.
PredictiveCandidates predictive_from_files(const std::filesystem::path& images, const std::filesystem::path& captions,
                                           const TrainingData& td);

/// Seed of the mining draw before phase-2 epoch `epoch` (0 when mining once).
std::uint64_t mining_seed(std::uint64_t seed, std::uint64_t epoch);

/// Splits the train images into consecutive chunks of `a` (a short tail is
/// merged into the previous chunk), ranks within each chunk and draws one
/// quadruple per caption.
MiningPlan mine_hard_negatives(const PredictiveCandidates& predictive, const TrainingData& td, std::size_t k,
                               std::size_t q, std::size_t a, std::uint64_t seed);

// --- CIDEr cache --------------------------------------------------------------

/// Φ(G_image, caption) memoized by (image, caption); the caption is left out
/// of G when it belongs to the image.
class PhiCache {
 public:
  explicit PhiCache(const TrainingData& td) : td_(&td) {}
  double phi(std::size_t image, std::size_t caption);
  std::size_t size() const { return cache_.size(); }

 private:
  const TrainingData* td_;
  std::map<std::pair<std::size_t, std::size_t>, double> cache_;
};

// --- training -----------------------------------------------------------------

/// Loss and parameter gradients of one batch of anchor captions.
struct BatchResult {
  LossBreakdown loss;
  ModelParams grads;
};

BatchResult phase1_batch(const ModelParams& params, const TrainingData& td, const std::vector<std::size_t>& anchors,
                         const TrainConfig& config);
/// `frozen_weights` replaces the penalty weights computed from the batch
/// (they are constants for the gradient either way).
BatchResult phase2_batch(const ModelParams& params, const TrainingData& td, const std::vector<std::size_t>& anchors,
                         const MiningPlan& plan, PhiCache& phi, const TrainConfig& config,
                         const std::vector<PenaltyWeights>* frozen_weights = nullptr);

/// Train captions of one epoch in shuffled order, cut into batches; a final
/// batch with fewer than two anchors is dropped.
std::vector<std::vector<std::size_t>> epoch_batches(const TrainingData& td, std::size_t batch_size,
                                                    std::uint64_t seed, int phase, std::uint64_t epoch);

/// Continues from state.epoch when state.phase == 1.
ModelState run_phase1(const TrainConfig& config, const TrainingData& td, ModelState state,
                      const MetricsSink& sink = {});
/// Starts phase 2 (or resumes it). Mines from `predictive` first; with
/// mining_refresh = epoch later epochs re-mine from the current model.
ModelState run_phase2(const TrainConfig& config, const TrainingData& td, ModelState state,
                      const PredictiveCandidates& predictive, const MetricsSink& sink = {});

// --- evaluation ---------------------------------------------------------------

struct SplitEmbeddings {
  SplitView view;
  Matrix images;    // one unit row per split image
  Matrix captions;  // one unit row per split caption
};

SplitEmbeddings embed_split(const ModelParams& params, const TrainingData& td, const std::vector<std::size_t>& images,
                            const ConsensusOptions& opts);

struct SplitRankings {
  RankingResult i2t;
  RankingResult t2i;
  GroundTruth truth;
};

SplitRankings rank_split(const SplitEmbeddings& emb, bool rerank, double gamma);
RecallReport evaluate_split(const ModelParams& params, const TrainingData& td, Split split,
                            const ConsensusOptions& opts, bool rerank = false, double gamma = 0.7);

}  // namespace amsps
