#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "amsps/text.hpp"

namespace amsps {

inline constexpr int kMaxNgram = 4;

/// Document frequencies of reference n-grams, one document per image.
class IdfTable {
 public:
  /// Each entry is the reference caption set of one image.
  static IdfTable build(const std::vector<std::vector<Words>>& reference_corpus);

  std::size_t corpus_size() const { return corpus_size_; }
  /// 0 for n-grams never seen.
  std::size_t document_frequency(const std::string& ngram, int n) const;
  /// log(N / df); unseen n-grams are treated as df = 1.
  double idf(const std::string& ngram, int n) const;

 private:
  std::size_t corpus_size_ = 0;
  std::array<std::map<std::string, std::size_t>, kMaxNgram> df_;
};

inline IdfTable build_idf(const std::vector<std::vector<Words>>& reference_corpus) {
  return IdfTable::build(reference_corpus);
}

/// Space-joined n-grams of order n with their counts.
std::map<std::string, std::size_t> count_ngrams(const Words& words, int n);

struct CiderScore {
  double value = 0;                   // 10 × mean(per_n)
  std::array<double, kMaxNgram> per_n{};  // mean tf-idf cosine for n = 1..4
};

CiderScore cider_score(const Words& candidate, const std::vector<Words>& references, const IdfTable& idf);

struct CaptionRef {
  std::string id;
  Words words;
};

struct MarginOptions {
  double beta = 10.0;
  double delta_max = 1.0;
};

struct AdaptiveMargins {
  double delta_v = 0;
  double delta_t = 0;
  double beta = 0;
};

/// clamp((phi_positive − phi_negative) / beta, 0, delta_max)
double margin_from_scores(double phi_positive, double phi_negative, const MarginOptions& opts);

/// CIDEr of `positive` against its ground-truth set with itself left out.
double leave_one_out_cider(const std::vector<CaptionRef>& gt_set, const CaptionRef& positive, const IdfTable& idf);

/// Δ_v from the in-batch negative caption, Δ_t from the caption attached
/// to the in-batch negative image.
AdaptiveMargins adaptive_margins(const std::vector<CaptionRef>& gt_set, const CaptionRef& positive,
                                 const Words& neg_caption, const Words& neg_partner_caption, const IdfTable& idf,
                                 const MarginOptions& opts);

}  // namespace amsps
