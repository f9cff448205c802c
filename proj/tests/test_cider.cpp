#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "amsps/cider.hpp"
#include "amsps/dataio.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace amsps;
using amsps::testing::Gen;

namespace {

Words w(const std::string& s) { return tokenize(s); }

std::vector<std::string> word_pool(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("w" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("idf degenerate corpora") {
  auto one = build_idf({{w("a b c d"), w("a b e")}});
  CHECK(one.corpus_size() == 1);
  CHECK(one.idf("a", 1) == 0.0);
  CHECK(one.idf("a b", 2) == 0.0);
  CHECK(one.idf("zzz", 1) == 0.0);

  auto every = build_idf({{w("the dog")}, {w("the cat")}, {w("the bird")}});
  CHECK(every.idf("the", 1) == 0.0);
  CHECK_THROWS_AS(build_idf({}), Error);
}

TEST_CASE("idf hand counts on four images") {
  auto idf = build_idf({
      {w("a dog runs"), w("the dog")},
      {w("a cat sits"), w("a cat")},
      {w("a dog and a cat")},
      {w("birds fly")},
  });
  CHECK(idf.document_frequency("a", 1) == 3);
  CHECK(idf.document_frequency("dog", 1) == 2);
  CHECK(idf.document_frequency("a cat", 2) == 2);
  CHECK(idf.document_frequency("birds fly", 2) == 1);
  CHECK(idf.document_frequency("zebra", 1) == 0);
  CHECK(std::abs(idf.idf("a", 1) - std::log(4.0 / 3.0)) <= 1e-12);
  CHECK(std::abs(idf.idf("dog", 1) - std::log(2.0)) <= 1e-12);
  CHECK(std::abs(idf.idf("a cat", 2) - std::log(2.0)) <= 1e-12);
  CHECK(std::abs(idf.idf("birds fly", 2) - std::log(4.0)) <= 1e-12);
  CHECK(std::abs(idf.idf("zebra", 1) - std::log(4.0)) <= 1e-12);
}

TEST_CASE("cider identity and disjoint cases") {
  auto idf = build_idf({{w("one two three four five")}, {w("six seven")}, {w("eight")}});
  auto same = cider_score(w("one two three four five"), {w("one two three four five")}, idf);
  CHECK(std::abs(same.value - 10.0) <= 1e-12);
  auto none = cider_score(w("six seven eight"), {w("one two three four five")}, idf);
  CHECK(none.value == 0.0);
  CHECK_THROWS_AS(cider_score(w("one"), {}, idf), Error);
  CHECK_THROWS_AS(cider_score({}, {w("one")}, idf), Error);
}

TEST_CASE("cider short captions score zero on long n-grams") {
  auto idf = build_idf({{w("a b")}, {w("c d")}});
  auto s = cider_score(w("a b"), {w("a b")}, idf);
  CHECK(s.per_n[2] == 0.0);
  CHECK(s.per_n[3] == 0.0);
  CHECK(std::abs(s.value - 10.0 * 0.5) <= 1e-12);
}

TEST_CASE("cider agrees with the brute-force oracle") {
  Gen g(1);
  for (int t = 0; t < 30; ++t) {
    const auto vocab = word_pool(g.between(3, 20));
    std::vector<std::vector<Words>> corpus(g.between(2, 6));
    for (auto& refs : corpus) {
      refs.resize(g.between(1, 4));
      for (auto& r : refs) r = g.sentence(vocab, 1, 10);
    }
    auto idf = build_idf(corpus);
    for (int c = 0; c < 5; ++c) {
      const auto cand = g.sentence(vocab, 1, 10);
      const auto& refs = corpus[g.index(corpus.size())];
      auto got = cider_score(cand, refs, idf);
      auto want = oracle::cider(cand, refs, corpus);
      CHECK(std::abs(got.value - want.score) <= 1e-9);
      for (int n = 0; n < 4; ++n) CHECK(std::abs(got.per_n[n] - want.per_n[n]) <= 1e-9);
    }
  }
}

TEST_CASE("cider properties") {
  Gen g(2);
  for (int t = 0; t < 40; ++t) {
    const auto vocab = word_pool(g.between(3, 12));
    std::vector<std::vector<Words>> corpus(g.between(2, 5));
    for (auto& refs : corpus) {
      refs.resize(g.between(1, 4));
      for (auto& r : refs) r = g.sentence(vocab, 1, 8);
    }
    auto idf = build_idf(corpus);
    const auto cand = g.sentence(vocab, 1, 8);
    auto refs = corpus[0];
    const double base = cider_score(cand, refs, idf).value;
    CHECK(base >= 0.0);

    auto shuffled = refs;
    g.shuffle(shuffled);
    CHECK(std::abs(cider_score(cand, shuffled, idf).value - base) <= 1e-12);

    // Adding a perfect reference raises the mean unless it was already at the cap.
    auto more = refs;
    more.push_back(cand);
    CHECK(cider_score(cand, more, idf).value >= base - 1e-12);
  }
}

TEST_CASE("cider matches the golden toy file") {
  const std::string dir = AMSPS_TEST_DATA;
  const auto refs = load_captions(dir + "/cider_refs.tsv");
  const auto cands = load_captions(dir + "/cider_cands.tsv");
  std::map<std::string, std::vector<CaptionRecord>> by_image;
  for (const auto& r : refs) by_image[r.image_id].push_back(r);
  std::vector<std::vector<Words>> docs;
  for (const auto& [id, recs] : by_image) {
    docs.emplace_back();
    for (const auto& r : recs) docs.back().push_back(tokenize(r.text));
  }
  auto idf = build_idf(docs);

  std::ifstream expected(dir + "/cider_expected.tsv");
  REQUIRE(expected.good());
  std::size_t row = 0;
  for (std::string line; std::getline(expected, line); ++row) {
    REQUIRE(row < cands.size());
    std::istringstream ls(line);
    std::string id;
    double score = 0;
    std::array<double, 4> per{};
    ls >> id >> score >> per[0] >> per[1] >> per[2] >> per[3];
    const auto& cand = cands[row];
    CHECK(id == cand.caption_id);
    std::vector<Words> own;
    for (const auto& r : by_image.at(cand.image_id)) {
      if (r.caption_id != cand.caption_id) own.push_back(tokenize(r.text));
    }
    auto got = cider_score(tokenize(cand.text), own, idf);
    CHECK(std::abs(got.value - score) <= 1e-9);
    for (int n = 0; n < 4; ++n) CHECK(std::abs(got.per_n[n] - per[n]) <= 1e-9);
  }
  CHECK(row == cands.size());
}

TEST_CASE("margin arithmetic") {
  MarginOptions opts{1.0, 1.0};
  CHECK(std::abs(margin_from_scores(0.8, 0.3, opts) - 0.5) <= 1e-15);
  CHECK(margin_from_scores(0.4, 0.4, opts) == 0.0);
  CHECK(margin_from_scores(0.3, 0.8, opts) == 0.0);
  CHECK(margin_from_scores(5.0, 0.0, opts) == 1.0);
  MarginOptions ten{10.0, 1.0};
  CHECK(std::abs(margin_from_scores(4.0, 1.0, ten) - 0.3) <= 1e-15);
}

TEST_CASE("adaptive margins use leave-one-out positives") {
  auto idf = build_idf({{w("a dog runs on grass"), w("a dog on the grass"), w("dog runs")},
                        {w("a cat sleeps")},
                        {w("a red car")}});
  std::vector<CaptionRef> gt = {{"p", w("a dog runs on grass")}, {"q", w("a dog on the grass")},
                                {"r", w("dog runs")}};
  const CaptionRef& pos = gt[0];
  const double loo = leave_one_out_cider(gt, pos, idf);
  CHECK(std::abs(loo - cider_score(pos.words, {gt[1].words, gt[2].words}, idf).value) <= 1e-15);
  CHECK(loo < 10.0);

  MarginOptions opts{10.0, 1.0};
  auto m = adaptive_margins(gt, pos, w("a cat sleeps"), w("a red car"), idf, opts);
  const double phi_neg = cider_score(w("a cat sleeps"), {gt[1].words, gt[2].words}, idf).value;
  CHECK(std::abs(m.delta_v - std::clamp((loo - phi_neg) / 10.0, 0.0, 1.0)) <= 1e-15);
  CHECK(m.delta_v > 0.0);

  // A negative as relevant as the positive gives no margin.
  auto eq = adaptive_margins(gt, pos, pos.words, pos.words, idf, opts);
  CHECK(eq.delta_v == 0.0);
  CHECK(eq.delta_t == 0.0);

  std::vector<CaptionRef> lonely = {pos};
  CHECK_THROWS_AS(adaptive_margins(lonely, pos, w("x"), w("y"), idf, opts), Error);
}
