#pragma once

// A small synthetic dataset and a config sized to it, for trainer-level tests.

#include "amsps/config.hpp"
#include "amsps/synthetic.hpp"

namespace amsps::testing {

inline SynthParams tiny_synth(std::uint64_t seed = 3) {
  SynthParams p;
  p.seed = seed;
  p.n_train = 16;
  p.n_val = 2;
  p.n_test = 6;
  p.captions_per_image = 3;
  p.latent_dim = 6;
  p.vocab_size = 60;
  p.regions = 3;
  p.feature_dim = 12;
  p.embed_dim = 8;
  p.concepts = 5;
  p.caption_length = 5;
  p.core_words = 7;
  return p;
}

inline TrainConfig tiny_config(const std::string& manifest) {
  TrainConfig c;
  c.manifest = manifest;
  c.batch_size = 6;
  c.epochs_phase1 = 3;
  c.epochs_phase2 = 2;
  c.word_dim = 8;
  c.embed_dim = 8;
  c.phase1_lr = 2e-3;
  c.phase2_lr = 2e-4;
  c.k = 3;
  c.q = 4;
  c.a = 16;
  c.b = 48;
  return c;
}

}  // namespace amsps::testing
