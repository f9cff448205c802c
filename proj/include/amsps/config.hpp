#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "amsps/consensus.hpp"
#include "amsps/losses.hpp"
#include "amsps/optimizer.hpp"

namespace amsps {

enum class MiningRefresh {
  Once,   // mine a single time when phase 2 starts
  Epoch,  // re-mine from the current model before every phase-2 epoch
};

struct TrainConfig {
  std::string manifest;  // relative paths resolve against the config file
  std::uint64_t seed = 1;

  std::string optimizer = "adam";
  double phase1_lr = 2e-4;
  double phase2_lr = 2e-5;
  std::size_t batch_size = 16;
  std::size_t epochs_phase1 = 30;
  std::size_t epochs_phase2 = 15;
  double grad_clip = 2.0;

  std::size_t word_dim = 32;
  std::size_t embed_dim = 32;

  double lambda = 10.0;
  double eta = 0.35;
  std::string ctlm_mixture = "prior";

  double delta1 = 0.2;
  double delta2 = 0.0;
  double tau = 1.5;
  double mu = 0.3;
  double beta = 10.0;
  double delta_max = 1.0;
  std::string negatives = "hardest";
  std::string aux_pair_mapping = "partners";

  std::size_t k = 6;
  std::size_t q = 30;
  std::size_t a = 40;
  std::size_t b = 200;
  std::string mining_refresh = "once";
  std::string predictive_images;    // optional MatrixFile, one row per train image
  std::string predictive_captions;  // optional MatrixFile, one row per train caption

  double rerank_gamma = 0.7;

  ConsensusOptions consensus_options() const;
  LossOptions loss_options() const;
  MarginOptions margin_options() const;
  AuxPairMapping aux_mapping() const;
  OptimizerKind optimizer_kind() const;
  MiningRefresh refresh() const;
};

/// Throws Usage errors for out-of-range values and unknown enum names.
void validate(const TrainConfig& c);

/// Every key must be known; missing keys keep their defaults.
TrainConfig parse_config(const std::string& json_text);
TrainConfig load_config(const std::filesystem::path& path);
/// Canonical JSON with every key, sorted; parse_config(format_config(c)) == c.
std::string format_config(const TrainConfig& c);

}  // namespace amsps
