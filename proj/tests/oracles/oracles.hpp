#pragma once

// Brute-force reference implementations for the test suite. They use only
// the standard library and share no code with the library under test.

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace oracle {

using Sentence = std::vector<std::string>;
using Table = std::vector<std::vector<double>>;

struct CiderResult {
  double score = 0;
  std::array<double, 4> per_n{};
};

/// Plain CIDEr: tf-idf n-gram vectors for n = 1..4, idf = log(N / max(1, df))
/// over `corpus` (one reference set per image), mean cosine against each
/// reference, averaged over n and scaled by 10.
CiderResult cider(const Sentence& candidate, const std::vector<Sentence>& references,
                  const std::vector<std::vector<Sentence>>& corpus);

/// Per row: every column index sorted by value descending (ties: lower index
/// first), excluded columns dropped, first k kept.
std::vector<std::vector<std::size_t>> topk(const Table& rows, std::size_t k,
                                           const std::vector<std::vector<std::size_t>>& exclusions);

struct RecallResult {
  std::array<double, 3> i2t{};
  std::array<double, 3> t2i{};
  double r_sum = 0;
};

/// Exhaustive recall@{1,5,10} from an image × caption score table. An item's
/// rank counts the gallery entries scoring strictly higher plus equal-scoring
/// entries with a lower index.
RecallResult recall(const Table& image_caption, const std::vector<std::size_t>& caption_to_image,
                    const std::array<std::size_t, 3>& ks = {1, 5, 10});

/// Central differences of f at x with step eps.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                double eps);

}  // namespace oracle
