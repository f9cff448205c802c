#include "amsps/cider.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "amsps/error.hpp"

namespace amsps {

namespace {

using NgramVector = std::map<std::string, double>;

NgramVector tfidf(const Words& words, int n, const IdfTable& idf) {
  NgramVector v;
  for (const auto& [gram, count] : count_ngrams(words, n)) {
    v.emplace(gram, static_cast<double>(count) * idf.idf(gram, n));
  }
  return v;
}

double squared_norm(const NgramVector& v) {
  double s = 0;
  for (const auto& [gram, w] : v) s += w * w;
  return s;
}

double cosine(const NgramVector& a, const NgramVector& b) {
  double dot = 0;
  for (const auto& [gram, w] : a) {
    auto it = b.find(gram);
    if (it != b.end()) dot += w * it->second;
  }
  const double na = squared_norm(a);
  const double nb = squared_norm(b);
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

}  // namespace

std::map<std::string, std::size_t> count_ngrams(const Words& words, int n) {
  std::map<std::string, std::size_t> counts;
  if (n < 1 || words.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= words.size(); ++i) {
    std::string gram = words[i];
    for (int k = 1; k < n; ++k) {
      gram += ' ';
      gram += words[i + static_cast<std::size_t>(k)];
    }
    ++counts[gram];
  }
  return counts;
}

IdfTable IdfTable::build(const std::vector<std::vector<Words>>& reference_corpus) {
  if (reference_corpus.empty()) throw Error(ErrorCategory::Data, "build_idf: empty reference corpus");
  IdfTable t;
  t.corpus_size_ = reference_corpus.size();
  for (const auto& refs : reference_corpus) {
    for (int n = 1; n <= kMaxNgram; ++n) {
      std::set<std::string> seen;
      for (const auto& caption : refs) {
        for (const auto& [gram, count] : count_ngrams(caption, n)) seen.insert(gram);
      }
      for (const auto& gram : seen) ++t.df_[n - 1][gram];
    }
  }
  return t;
}

std::size_t IdfTable::document_frequency(const std::string& ngram, int n) const {
  if (n < 1 || n > kMaxNgram) return 0;
  auto it = df_[n - 1].find(ngram);
  return it == df_[n - 1].end() ? 0 : it->second;
}

double IdfTable::idf(const std::string& ngram, int n) const {
  const auto df = std::max<std::size_t>(1, document_frequency(ngram, n));
  return std::log(static_cast<double>(corpus_size_) / static_cast<double>(df));
}

CiderScore cider_score(const Words& candidate, const std::vector<Words>& references, const IdfTable& idf) {
  if (candidate.empty()) throw Error(ErrorCategory::Data, "cider_score: empty candidate");
  if (references.empty()) throw Error(ErrorCategory::Data, "cider_score: no references");
  CiderScore score;
  for (int n = 1; n <= kMaxNgram; ++n) {
    const auto cand = tfidf(candidate, n, idf);
    double total = 0;
    for (const auto& ref : references) total += cosine(cand, tfidf(ref, n, idf));
    score.per_n[n - 1] = total / static_cast<double>(references.size());
  }
  double sum = 0;
  for (double v : score.per_n) sum += v;
  score.value = 10.0 * sum / kMaxNgram;
  return score;
}

double margin_from_scores(double phi_positive, double phi_negative, const MarginOptions& opts) {
  if (!(opts.beta > 0)) throw Error(ErrorCategory::Data, "adaptive margin: beta must be positive");
  const double raw = (phi_positive - phi_negative) / opts.beta;
  return std::clamp(raw, 0.0, opts.delta_max);
}

double leave_one_out_cider(const std::vector<CaptionRef>& gt_set, const CaptionRef& positive, const IdfTable& idf) {
  std::vector<Words> refs;
  refs.reserve(gt_set.size());
  for (const auto& c : gt_set) {
    if (c.id != positive.id) refs.push_back(c.words);
  }
  if (refs.empty()) {
    throw Error(ErrorCategory::Data, "adaptive margin: caption '" + positive.id +
                                         "' has no other ground-truth caption to score against");
  }
  return cider_score(positive.words, refs, idf).value;
}

AdaptiveMargins adaptive_margins(const std::vector<CaptionRef>& gt_set, const CaptionRef& positive,
                                 const Words& neg_caption, const Words& neg_partner_caption, const IdfTable& idf,
                                 const MarginOptions& opts) {
  std::vector<Words> refs;
  refs.reserve(gt_set.size());
  for (const auto& c : gt_set) refs.push_back(c.words);
  if (refs.empty()) throw Error(ErrorCategory::Data, "adaptive margin: empty ground-truth set");
  const double phi_pos = leave_one_out_cider(gt_set, positive, idf);
  AdaptiveMargins m;
  m.beta = opts.beta;
  m.delta_v = margin_from_scores(phi_pos, cider_score(neg_caption, refs, idf).value, opts);
  m.delta_t = margin_from_scores(phi_pos, cider_score(neg_partner_caption, refs, idf).value, opts);
  return m;
}

}  // namespace amsps
