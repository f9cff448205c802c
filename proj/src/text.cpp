#include "amsps/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "amsps/error.hpp"

namespace amsps {

Words tokenize(std::string_view text) {
  Words out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{kUnknown}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : words_(words) {
  if (words_.empty() || words_.front() != kUnknown) {
    throw Error(ErrorCategory::Data, "vocabulary must start with the unknown token");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!lookup_.emplace(words_[i], static_cast<int>(i)).second) {
      throw Error(ErrorCategory::Data, "vocabulary has duplicate word '" + words_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::from_sentences(const std::vector<Words>& sentences) {
  std::set<std::string> unique;
  for (const auto& s : sentences) unique.insert(s.begin(), s.end());
  unique.erase(kUnknown);
  std::vector<std::string> words{kUnknown};
  words.insert(words.end(), unique.begin(), unique.end());
  return Vocabulary(words);
}

int Vocabulary::index(const std::string& word) const {
  auto it = lookup_.find(word);
  return it == lookup_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::encode(const Words& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(index(w));
  return ids;
}

}  // namespace amsps
