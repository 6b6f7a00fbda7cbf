#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "artic/core/error.hpp"

namespace artic::corpus {

/// Phoneme label alphabet. Index 0 is reserved for padding, index 1 for
/// silence; real phonemes follow.
class PhonemeInventory {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kSilenceId = 1;

  explicit PhonemeInventory(std::vector<std::string> symbols)
      : symbols_(std::move(symbols)) {
    if (symbols_.size() < 3)
      throw ConfigError("inventory needs padding, silence and at least one phoneme");
    for (int i = 0; i < static_cast<int>(symbols_.size()); ++i) {
      auto [it, fresh] = index_.emplace(symbols_[static_cast<std::size_t>(i)], i);
      if (!fresh)
        throw ConfigError("duplicate phoneme symbol: " + symbols_[static_cast<std::size_t>(i)]);
    }
  }

  /// 39-symbol ARPAbet-style set plus silence plus padding.
  static PhonemeInventory default_arpabet() {
    std::vector<std::string> s{"<pad>", "sil"};
    for (const char* p :
         {"aa", "ae", "ah", "ao", "aw", "ay", "b",  "ch", "d",  "dh",
          "eh", "er", "ey", "f",  "g",  "hh", "ih", "iy", "jh", "k",
          "l",  "m",  "n",  "ng", "ow", "oy", "p",  "r",  "s",  "sh",
          "t",  "th", "uh", "uw", "v",  "w",  "y",  "z",  "zh"})
      s.emplace_back(p);
    return PhonemeInventory(std::move(s));
  }

  int size() const { return static_cast<int>(symbols_.size()); }

  const std::string& symbol(int id) const {
    if (id < 0 || id >= size())
      throw Error("phoneme id " + std::to_string(id) + " out of range");
    return symbols_[static_cast<std::size_t>(id)];
  }

  int id_of(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end())
      throw Error("unknown phoneme label: '" + symbol + "'");
    return it->second;
  }

  bool contains(const std::string& symbol) const { return index_.count(symbol) > 0; }

  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace artic::corpus
