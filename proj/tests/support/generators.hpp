#pragma once

// Hand-rolled random generators for property tests. Every draw goes through
// one seeded engine so a failing case is reproduced by its seed.

#include <random>
#include <string>
#include <vector>

#include "amsps/numerics.hpp"
#include "amsps/text.hpp"

namespace amsps::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::mt19937_64& engine() { return rng_; }

  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  std::size_t between(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  Matrix matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * uniform();
    return m;
  }

  Vector vector(Eigen::Index n, double scale = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * uniform();
    return v;
  }

  Vector unit(Eigen::Index n) {
    Vector v(n);
    do {
      for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    } while (v.norm() < 1e-3);
    return v / v.norm();
  }

  Matrix unit_rows(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) m.row(i) = unit(cols).transpose();
    return m;
  }

  /// Entries from a small integer grid, so exact ties are common.
  Matrix grid_matrix(Eigen::Index rows, Eigen::Index cols, int levels) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<double>(between(0, static_cast<std::size_t>(levels - 1))) / levels;
    }
    return m;
  }

  Words sentence(const std::vector<std::string>& vocab, std::size_t min_len, std::size_t max_len) {
    Words w(between(min_len, max_len));
    for (auto& t : w) t = vocab[index(vocab.size())];
    return w;
  }

  std::vector<int> tokens(std::size_t length, std::size_t vocab_size) {
    std::vector<int> t(length);
    for (auto& x : t) x = static_cast<int>(index(vocab_size));
    return t;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 rng_;
};

inline std::vector<std::string> toy_vocab(std::size_t n) {
  static const char* syll[] = {"ka", "lo", "mi", "nu", "pe", "ro", "si", "tu", "va", "ze"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(syll[i % 10]) + syll[(i / 10) % 10]);
  return out;
}

}  // namespace amsps::testing
