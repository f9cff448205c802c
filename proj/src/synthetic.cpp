#include "amsps/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "amsps/dataio.hpp"

namespace amsps {

namespace fs = std::filesystem;

void validate(const SynthParams& p) {
  if (p.n_train < 2 || p.n_test < 1 || p.captions_per_image < 1 || p.latent_dim < 1 || p.vocab_size < 2 ||
      p.regions < 1 || p.feature_dim < 1 || p.embed_dim < 1 || p.caption_length < 1) {
    throw Error(ErrorCategory::Usage, "synthetic: sizes must be positive (train >= 2)");
  }
  if (!(p.noise_sigma >= 0)) throw Error(ErrorCategory::Usage, "synthetic: noise_sigma must be non-negative");
  if (p.core_words < 1 || p.core_words > p.vocab_size) {
    throw Error(ErrorCategory::Usage, "synthetic: core_words must lie in [1, vocab_size]");
  }
  if (p.vocab_size > 1400) throw Error(ErrorCategory::Usage, "synthetic: vocab_size above 1400 would repeat words");
  if (p.concepts < 2 || p.concepts > p.vocab_size) {
    throw Error(ErrorCategory::Usage, "synthetic: concepts must lie in [2, vocab_size]");
  }
}

std::string synthetic_word(std::size_t index) {
  static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u"};
  constexpr std::size_t kSyllables = std::size(kOnsets) * std::size(kVowels);
  std::string word;
  std::size_t v = index;
  do {
    const auto s = v % kSyllables;
    word += kOnsets[s / std::size(kVowels)];
    word += kVowels[s % std::size(kVowels)];
    v /= kSyllables;
  } while (v > 0);
  // Two syllables minimum keeps words distinct from single letters.
  if (word.size() < 4) word += "ka";
  return word;
}

namespace {

Vector gaussian_unit(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g(rng);
  } while (v.norm() == 0);
  return v.normalized();
}

}  // namespace

fs::path generate_synthetic(const SynthParams& p, const fs::path& dir) {
  validate(p);
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto latent = static_cast<Eigen::Index>(p.latent_dim);
  std::vector<std::string> words(p.vocab_size);
  for (std::size_t w = 0; w < p.vocab_size; ++w) words[w] = synthetic_word(w);
  Matrix word_dirs(static_cast<Eigen::Index>(p.vocab_size), latent);
  for (std::size_t w = 0; w < p.vocab_size; ++w) {
    word_dirs.row(static_cast<Eigen::Index>(w)) = gaussian_unit(p.latent_dim, rng).transpose();
  }
  Matrix lift(latent, static_cast<Eigen::Index>(p.feature_dim));
  for (Eigen::Index i = 0; i < lift.size(); ++i) lift.data()[i] = gauss(rng) / std::sqrt(static_cast<double>(latent));

  const auto n = p.total_images();
  const auto o = static_cast<Eigen::Index>(p.regions);
  Matrix latents(static_cast<Eigen::Index>(n), latent);
  MatrixF features(static_cast<Eigen::Index>(n) * o, static_cast<Eigen::Index>(p.feature_dim));
  std::vector<CaptionRecord> captions;
  const double noise_scale = p.noise_sigma / std::sqrt(static_cast<double>(latent));
  const double word_noise = std::min(0.5, p.noise_sigma / 2.0);

  for (std::size_t img = 0; img < n; ++img) {
    const Vector z = gaussian_unit(p.latent_dim, rng);
    latents.row(static_cast<Eigen::Index>(img)) = z.transpose();
    for (Eigen::Index r = 0; r < o; ++r) {
      Vector noisy = z;
      for (Eigen::Index k = 0; k < latent; ++k) noisy[k] += noise_scale * gauss(rng);
      features.row(static_cast<Eigen::Index>(img) * o + r) = (noisy.transpose() * lift).cast<float>();
    }

    // Core vocabulary: the words most aligned with the latent, best first.
    const Vector relevance = word_dirs * z;
    std::vector<std::size_t> ranked(p.vocab_size);
    std::iota(ranked.begin(), ranked.end(), std::size_t{0});
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      return relevance[static_cast<Eigen::Index>(a)] > relevance[static_cast<Eigen::Index>(b)];
    });
    ranked.resize(p.core_words);

    for (std::size_t c = 0; c < p.captions_per_image; ++c) {
      std::vector<std::size_t> pool = ranked;
      std::shuffle(pool.begin(), pool.end(), rng);
      const auto length = std::min(p.caption_length, pool.size());
      pool.resize(length);
      // Keep relevance order so captions of one image share n-grams.
      std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        return relevance[static_cast<Eigen::Index>(a)] > relevance[static_cast<Eigen::Index>(b)];
      });
      std::uniform_int_distribution<std::size_t> any_word(0, p.vocab_size - 1);
      for (auto& w : pool) {
        if (unit(rng) < word_noise) w = any_word(rng);
      }
      std::string text;
      for (std::size_t k = 0; k < pool.size(); ++k) {
        if (k) text += ' ';
        text += words[pool[k]];
      }
      captions.push_back({std::to_string(img), std::to_string(img) + "_" + std::to_string(c), text});
    }
  }

  // Frozen concept bank: named after randomly chosen vocabulary words.
  std::vector<std::size_t> concept_words(p.vocab_size);
  std::iota(concept_words.begin(), concept_words.end(), std::size_t{0});
  std::shuffle(concept_words.begin(), concept_words.end(), rng);
  concept_words.resize(p.concepts);
  MatrixF corpus(static_cast<Eigen::Index>(p.concepts), static_cast<Eigen::Index>(p.embed_dim));
  std::string concept_text;
  for (std::size_t i = 0; i < p.concepts; ++i) {
    corpus.row(static_cast<Eigen::Index>(i)) = gaussian_unit(p.embed_dim, rng).transpose().cast<float>();
    concept_text += words[concept_words[i]] + "\n";
  }

  DatasetManifest m;
  m.image_features = "features.amsp";
  m.regions_per_image = p.regions;
  m.captions = "captions.tsv";
  m.corpus = "corpus.amsp";
  m.concepts = "concepts.txt";
  m.latents = "latents.amsp";
  m.word_directions = "word_directions.amsp";
  m.words = "words.txt";
  for (std::size_t i = 0; i < n; ++i) {
    auto& split = i < p.n_train ? m.train : (i < p.n_train + p.n_val ? m.val : m.test);
    split.push_back(std::to_string(i));
  }

  fs::create_directories(dir);
  save_matrix(dir / m.image_features, features);
  write_file_atomic(dir / m.captions, format_captions(captions));
  save_matrix(dir / m.corpus, corpus);
  write_file_atomic(dir / m.concepts, concept_text);
  save_matrix(dir / m.latents, latents.cast<float>());
  save_matrix(dir / m.word_directions, word_dirs.cast<float>());
  std::string word_text;
  for (const auto& w : words) word_text += w + "\n";
  write_file_atomic(dir / m.words, word_text);
  const auto manifest_path = dir / "manifest.json";
  write_file_atomic(manifest_path, format_manifest(m));
  return manifest_path;
}

}  // namespace amsps
