// Per-step vocabulary masks over a recognizer state.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "crane/recognizer.hpp"
#include "crane/vocabulary.hpp"

namespace crane {

/// Admissibility bitset m over the vocabulary.
class MaskBits {
 public:
  MaskBits() = default;
  explicit MaskBits(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}

  std::size_t size() const { return size_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
  void set(std::size_t i, bool on = true) {
    if (on) {
      words_[i / 64] |= std::uint64_t{1} << (i % 64);
    } else {
      words_[i / 64] &= ~(std::uint64_t{1} << (i % 64));
    }
  }
  std::size_t count() const;
  bool any() const;
  /// Ids of the set bits in increasing order.
  std::vector<TokenId> ids() const;

  friend bool operator==(const MaskBits&, const MaskBits&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

using ScoreVector = std::vector<double>;

class NoViableToken : public std::runtime_error {
 public:
  explicit NoViableToken(const std::string& what) : std::runtime_error(what) {}
};

/// Tokens whose bytes keep `state` alive, plus EOS iff `state` is complete.
/// May be empty.
MaskBits admissible_tokens(const RecognizerState& state, const Vocabulary& vocab);

/// As admissible_tokens(), but throws NoViableToken when nothing is admissible.
MaskBits compute_mask(const RecognizerState& state, const Vocabulary& vocab);

/// Masked-out entries become -infinity. Throws std::invalid_argument on a
/// length mismatch.
ScoreVector apply_mask(const ScoreVector& scores, const MaskBits& mask);

/// Softmax that gives zero probability to -infinity entries.
std::vector<double> softmax(const ScoreVector& scores);

/// Index of the largest score; ties go to the lowest index.
TokenId argmax(const ScoreVector& scores);

}  // namespace crane
