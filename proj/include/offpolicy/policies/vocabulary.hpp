#ifndef OFFPOLICY_POLICIES_VOCABULARY_HPP_
#define OFFPOLICY_POLICIES_VOCABULARY_HPP_

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace offpolicy::policies {

// Token <-> id bijection. Ids 0..3 are reserved for PAD, BOS, EOS and UNK;
// content tokens follow in insertion order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& content_tokens);

  int pad_id() const { return kPad; }
  int bos_id() const { return kBos; }
  int eos_id() const { return kEos; }
  int unk_id() const { return kUnk; }

  std::size_t size() const { return tokens_.size(); }
  // Returns the existing id when the token is already present.
  int add(std::string_view token);
  bool contains(std::string_view token) const;
  int id(std::string_view token) const;  // unk_id() when absent
  const std::string& token(int id) const;
  bool is_reserved(int id) const { return id >= 0 && id < kNumReserved; }
  bool valid_id(int id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }

  // Content tokens only, in id order.
  std::vector<std::string> content_tokens() const;

  // Whitespace tokenization; unknown words map to UNK.
  std::vector<int> encode(std::string_view text) const;
  // Joins tokens with spaces, stopping at EOS and skipping PAD/BOS.
  std::string decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace offpolicy::policies

#endif  // OFFPOLICY_POLICIES_VOCABULARY_HPP_
