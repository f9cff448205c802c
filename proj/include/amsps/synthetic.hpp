#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amsps/numerics.hpp"

namespace amsps {

/// Parameters of the latent-variable toy dataset. Each image draws a unit
/// latent; region features lift latent + noise through a fixed random map,
/// and captions are word sequences chosen by alignment of per-word latent
/// directions with the image latent.
struct SynthParams {
  std::uint64_t seed = 7;
  std::size_t n_train = 128;
  std::size_t n_val = 16;
  std::size_t n_test = 32;
  std::size_t captions_per_image = 5;
  std::size_t latent_dim = 16;
  double noise_sigma = 0.3;
  std::size_t vocab_size = 200;
  std::size_t regions = 8;
  std::size_t feature_dim = 64;
  std::size_t embed_dim = 32;      // width of the consensus corpus
  std::size_t concepts = 16;
  std::size_t caption_length = 8;
  std::size_t core_words = 10;     // words an image's captions draw from

  std::size_t total_images() const { return n_train + n_val + n_test; }
};

void validate(const SynthParams& p);

/// Deterministic pronounceable word for a vocabulary index.
std::string synthetic_word(std::size_t index);

/// Writes features, captions, corpus, concepts, latents and manifest.json
/// into `dir`; returns the manifest path.
std::filesystem::path generate_synthetic(const SynthParams& params, const std::filesystem::path& dir);

}  // namespace amsps
