#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace amsps {

using Words = std::vector<std::string>;

/// Lowercases and splits on whitespace and ASCII punctuation. No stemming.
Words tokenize(std::string_view text);

/// Word-to-index table. Index 0 is reserved for out-of-vocabulary words.
class Vocabulary {
 public:
  static constexpr const char* kUnknown = "<unk>";

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words);

  /// Sorted unique words of all sentences, preceded by the unknown token.
  static Vocabulary from_sentences(const std::vector<Words>& sentences);

  int index(const std::string& word) const;
  std::vector<int> encode(const Words& words) const;
  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> lookup_;
};

}  // namespace amsps
