#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgx/common.hpp"
#include "kgx/kg.hpp"

namespace kgx {

/// Whitespace-token vocabulary. Ids 0..5 are reserved for the special
/// markers; unknown words map to UNK.
class Tokenizer {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kCtxL = 3;
  static constexpr int kCtxR = 4;
  static constexpr int kDesc = 5;

  Tokenizer();
  explicit Tokenizer(const std::vector<std::string>& words);

  void add_word(const std::string& word);
  int id_of(const std::string& word) const;  // kUnk when absent
  const std::string& word_of(int id) const;
  int vocab_size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<int> ids(const std::vector<std::string>& tokens) const;
  /// Split on whitespace, then map to ids.
  std::vector<int> ids_of_string(const std::string& text) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// A marker-delimited token sequence ready for the encoder. Position 0 is
/// always CLS and the final position is always SEP.
struct TokenizedText {
  std::vector<int> tokens;
  // Keys used: CLS, DESC, SEP_MID, CTX_L, CTX_R, SEP (subset per template).
  std::map<std::string, int> special_positions;

  int length() const { return static_cast<int>(tokens.size()); }
  int pos(const std::string& marker) const;
};

struct Span {
  int start = 0;
  int end = 0;  // inclusive

  bool operator==(const Span& o) const { return start == o.start && end == o.end; }
  bool operator<(const Span& o) const {
    return start != o.start ? start < o.start : end < o.end;
  }
};

// Template builders. Shapes:
//   mention: [CLS] {mention} [CTX_L] {left} [CTX_R] {right} [SEP]
//   entity:  [CLS] {label} [DESC] {desc} [SEP]
//   joint:   entity part, then mention part, sharing one CLS and ending in
//            a second SEP (the inner one is recorded as SEP_MID).
TokenizedText build_mention_rep(const Tokenizer& tok, const std::vector<std::string>& tokens,
                                Span span, int window);
TokenizedText build_entity_rep(const Tokenizer& tok, const EntityRecord& entity);
TokenizedText build_joint_rep(const Tokenizer& tok, const EntityRecord& entity,
                              const std::vector<std::string>& tokens, Span span, int window,
                              bool include_description = true);

// Segment readback, used by the round-trip tests and debug tooling.
std::vector<int> mention_segment(const TokenizedText& text);
std::vector<int> left_context_segment(const TokenizedText& text);
std::vector<int> right_context_segment(const TokenizedText& text);
std::vector<int> label_segment(const TokenizedText& text);
std::vector<int> description_segment(const TokenizedText& text);

/// Drop context/description tokens (right-most first, in the order right
/// context, left context, description) until length <= max_len. Mention and
/// label tokens are never dropped; raises if the protected segments alone
/// exceed max_len.
TokenizedText truncate_to(const TokenizedText& text, int max_len);

}  // namespace kgx
