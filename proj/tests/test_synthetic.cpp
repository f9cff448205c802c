#include <doctest.h>

#include <set>

#include "amsps/dataio.hpp"
#include "amsps/synthetic.hpp"
#include "tempdir.hpp"

using namespace amsps;
using amsps::testing::TempDir;

namespace {

SynthParams quiet() {
  SynthParams p;
  p.n_train = 20;
  p.n_val = 4;
  p.n_test = 8;
  p.noise_sigma = 0.0;
  return p;
}

}  // namespace

TEST_CASE("synthetic words are distinct") {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < 1400; ++i) CHECK(seen.insert(synthetic_word(i)).second);
  SynthParams p;
  p.vocab_size = 1401;
  CHECK_THROWS_AS(validate(p), Error);
}

TEST_CASE("same seed gives byte-identical files") {
  TempDir a("synth_a"), b("synth_b"), c("synth_c");
  SynthParams p;
  p.n_train = 10;
  generate_synthetic(p, a.path());
  generate_synthetic(p, b.path());
  p.seed += 1;
  generate_synthetic(p, c.path());
  for (const char* f : {"manifest.json", "features.amsp", "captions.tsv", "corpus.amsp", "concepts.txt",
                        "latents.amsp", "word_directions.amsp", "words.txt"}) {
    CHECK_MESSAGE(read_file(a / f) == read_file(b / f), f);
  }
  CHECK(read_file(a / "features.amsp") != read_file(c / "features.amsp"));
  CHECK(read_file(a / "captions.tsv") != read_file(c / "captions.tsv"));
}

TEST_CASE("noiseless data pairs match under the generative map") {
  TempDir dir("synth_quiet");
  const auto p = quiet();
  const auto data = load_dataset(generate_synthetic(p, dir.path()));
  const Matrix latents = load_matrix(dir / "latents.amsp");
  const Matrix dirs = load_matrix(dir / "word_directions.amsp");
  std::vector<std::string> words;
  for (std::size_t i = 0; i < p.vocab_size; ++i) words.push_back(synthetic_word(i));
  auto word_index = [&](const std::string& w) {
    return static_cast<Eigen::Index>(std::find(words.begin(), words.end(), w) - words.begin());
  };

  // Regions of one image coincide when there is no noise.
  for (const auto& img : data.images) {
    for (Eigen::Index r = 1; r < img.regions.rows(); ++r) CHECK(img.regions.row(r) == img.regions.row(0));
  }

  // A caption's generative score: mean alignment of its words with a latent.
  std::size_t own_best = 0;
  for (const auto& c : data.captions) {
    Vector mean = Vector::Zero(dirs.cols());
    for (const auto& w : c.words) {
      const auto k = word_index(w);
      REQUIRE(k < dirs.rows());
      mean += dirs.row(k).transpose();
    }
    const Vector scores = latents * mean;
    Eigen::Index best = 0;
    scores.maxCoeff(&best);
    if (static_cast<std::size_t>(best) == c.image) ++own_best;

    // Every word is among the image's most aligned words.
    const Vector relevance = dirs * latents.row(static_cast<Eigen::Index>(c.image)).transpose();
    for (const auto& w : c.words) {
      const double r = relevance[word_index(w)];
      const auto above = (relevance.array() > r).count();
      CHECK(static_cast<std::size_t>(above) < p.core_words);
    }
  }
  CHECK(own_best == data.captions.size());
}
