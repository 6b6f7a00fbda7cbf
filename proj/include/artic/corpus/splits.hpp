#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "artic/core/error.hpp"
#include "artic/core/random.hpp"

namespace artic::corpus {

/// Sentence-level 80/10/10 partition, identical across subjects by
/// construction (it is made once over sentence ids).
struct CorpusSplit {
  std::vector<std::string> train, val, test;

  bool in_train(const std::string& id) const { return contains_(train, id); }
  bool in_val(const std::string& id) const { return contains_(val, id); }
  bool in_test(const std::string& id) const { return contains_(test, id); }

  const std::vector<std::string>& part(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ConfigError("unknown split name: " + name);
  }

 private:
  static bool contains_(const std::vector<std::string>& v, const std::string& id) {
    return std::find(v.begin(), v.end(), id) != v.end();
  }
};

/// Deterministic seeded shuffle of the sentence list, then 80/10/10 by count
/// (val and test each take floor(0.1 n)). Requires at least 10 sentences.
inline CorpusSplit make_splits(std::vector<std::string> sentences,
                               std::uint64_t seed) {
  const int n = static_cast<int>(sentences.size());
  if (n < 10)
    throw Error("make_splits: need at least 10 sentences, got " + std::to_string(n));
  std::sort(sentences.begin(), sentences.end());
  for (std::size_t i = 1; i < sentences.size(); ++i)
    if (sentences[i] == sentences[i - 1])
      throw Error("make_splits: duplicate sentence id " + sentences[i]);
  Rng rng = Rng::keyed(seed, Rng::hash_tag("corpus-split"));
  rng.shuffle(sentences);
  const int n_val = n / 10;
  const int n_test = n / 10;
  const int n_train = n - n_val - n_test;
  CorpusSplit split;
  split.train.assign(sentences.begin(), sentences.begin() + n_train);
  split.val.assign(sentences.begin() + n_train, sentences.begin() + n_train + n_val);
  split.test.assign(sentences.begin() + n_train + n_val, sentences.end());
  return split;
}

}  // namespace artic::corpus
