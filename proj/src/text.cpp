#include "kgx/text.hpp"

#include <algorithm>
#include <sstream>

namespace kgx {

namespace {
const char* kSpecialNames[] = {"[UNK]", "[CLS]", "[SEP]", "[CTX_L]", "[CTX_R]", "[DESC]"};
}

Tokenizer::Tokenizer() {
  for (const char* s : kSpecialNames) {
    index_[s] = static_cast<int>(words_.size());
    words_.emplace_back(s);
  }
}

Tokenizer::Tokenizer(const std::vector<std::string>& words) : Tokenizer() {
  for (const auto& w : words) add_word(w);
}

void Tokenizer::add_word(const std::string& word) {
  if (index_.count(word)) return;
  index_[word] = static_cast<int>(words_.size());
  words_.push_back(word);
}

int Tokenizer::id_of(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::word_of(int id) const {
  if (id < 0 || id >= vocab_size()) {
    throw ValidationError("token id out of range: " + std::to_string(id));
  }
  return words_[static_cast<size_t>(id)];
}

std::vector<int> Tokenizer::ids(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id_of(t));
  return out;
}

std::vector<int> Tokenizer::ids_of_string(const std::string& text) const {
  std::vector<int> out;
  std::istringstream ss(text);
  std::string word;
  while (ss >> word) out.push_back(id_of(word));
  return out;
}

int TokenizedText::pos(const std::string& marker) const {
  auto it = special_positions.find(marker);
  if (it == special_positions.end()) {
    throw ValidationError("marker not present: " + marker);
  }
  return it->second;
}

namespace {

void check_span(const std::vector<std::string>& tokens, Span span) {
  const int n = static_cast<int>(tokens.size());
  if (span.start < 0 || span.end >= n || span.start > span.end) {
    throw ValidationError("invalid span (" + std::to_string(span.start) + "," +
                          std::to_string(span.end) + ") for " + std::to_string(n) + " tokens");
  }
}

// Appends mention/context part without the leading CLS: {mention} [CTX_L]
// {left} [CTX_R] {right}.
void append_mention_part(TokenizedText& out, const Tokenizer& tok,
                         const std::vector<std::string>& tokens, Span span, int window) {
  const int n = static_cast<int>(tokens.size());
  for (int i = span.start; i <= span.end; ++i) out.tokens.push_back(tok.id_of(tokens[i]));
  out.special_positions["CTX_L"] = out.length();
  out.tokens.push_back(Tokenizer::kCtxL);
  for (int i = std::max(0, span.start - window); i < span.start; ++i) {
    out.tokens.push_back(tok.id_of(tokens[i]));
  }
  out.special_positions["CTX_R"] = out.length();
  out.tokens.push_back(Tokenizer::kCtxR);
  for (int i = span.end + 1; i <= std::min(n - 1, span.end + window); ++i) {
    out.tokens.push_back(tok.id_of(tokens[i]));
  }
}

}  // namespace

TokenizedText build_mention_rep(const Tokenizer& tok, const std::vector<std::string>& tokens,
                                Span span, int window) {
  check_span(tokens, span);
  if (window < 0) throw ValidationError("window must be >= 0");
  TokenizedText out;
  out.special_positions["CLS"] = 0;
  out.tokens.push_back(Tokenizer::kCls);
  append_mention_part(out, tok, tokens, span, window);
  out.special_positions["SEP"] = out.length();
  out.tokens.push_back(Tokenizer::kSep);
  return out;
}

TokenizedText build_entity_rep(const Tokenizer& tok, const EntityRecord& entity) {
  TokenizedText out;
  out.special_positions["CLS"] = 0;
  out.tokens.push_back(Tokenizer::kCls);
  for (int id : tok.ids_of_string(entity.label)) out.tokens.push_back(id);
  out.special_positions["DESC"] = out.length();
  out.tokens.push_back(Tokenizer::kDesc);
  for (int id : tok.ids_of_string(entity.description)) out.tokens.push_back(id);
  out.special_positions["SEP"] = out.length();
  out.tokens.push_back(Tokenizer::kSep);
  return out;
}

TokenizedText build_joint_rep(const Tokenizer& tok, const EntityRecord& entity,
                              const std::vector<std::string>& tokens, Span span, int window,
                              bool include_description) {
  check_span(tokens, span);
  if (window < 0) throw ValidationError("window must be >= 0");
  TokenizedText out;
  out.special_positions["CLS"] = 0;
  out.tokens.push_back(Tokenizer::kCls);
  for (int id : tok.ids_of_string(entity.label)) out.tokens.push_back(id);
  out.special_positions["DESC"] = out.length();
  out.tokens.push_back(Tokenizer::kDesc);
  if (include_description) {
    for (int id : tok.ids_of_string(entity.description)) out.tokens.push_back(id);
  }
  out.special_positions["SEP_MID"] = out.length();
  out.tokens.push_back(Tokenizer::kSep);
  append_mention_part(out, tok, tokens, span, window);
  out.special_positions["SEP"] = out.length();
  out.tokens.push_back(Tokenizer::kSep);
  return out;
}

namespace {

std::vector<int> slice(const TokenizedText& t, int from, int to) {  // [from, to)
  std::vector<int> out;
  for (int i = from; i < to; ++i) out.push_back(t.tokens[static_cast<size_t>(i)]);
  return out;
}

}  // namespace

std::vector<int> mention_segment(const TokenizedText& t) {
  const int begin = t.special_positions.count("SEP_MID") ? t.pos("SEP_MID") + 1 : t.pos("CLS") + 1;
  return slice(t, begin, t.pos("CTX_L"));
}

std::vector<int> left_context_segment(const TokenizedText& t) {
  return slice(t, t.pos("CTX_L") + 1, t.pos("CTX_R"));
}

std::vector<int> right_context_segment(const TokenizedText& t) {
  return slice(t, t.pos("CTX_R") + 1, t.pos("SEP"));
}

std::vector<int> label_segment(const TokenizedText& t) {
  return slice(t, t.pos("CLS") + 1, t.pos("DESC"));
}

std::vector<int> description_segment(const TokenizedText& t) {
  const int end = t.special_positions.count("SEP_MID") ? t.pos("SEP_MID") : t.pos("SEP");
  return slice(t, t.pos("DESC") + 1, end);
}

TokenizedText truncate_to(const TokenizedText& text, int max_len) {
  if (max_len < 2) throw ValidationError("max_len must be >= 2");
  if (text.length() <= max_len) return text;

  // Work on segment boundaries, then rebuild.
  const bool joint = text.special_positions.count("SEP_MID") > 0;
  const bool has_entity = text.special_positions.count("DESC") > 0;
  const bool has_mention = text.special_positions.count("CTX_L") > 0;

  std::vector<int> label = has_entity ? label_segment(text) : std::vector<int>{};
  std::vector<int> desc = has_entity ? description_segment(text) : std::vector<int>{};
  std::vector<int> mention = has_mention ? mention_segment(text) : std::vector<int>{};
  std::vector<int> left = has_mention ? left_context_segment(text) : std::vector<int>{};
  std::vector<int> right = has_mention ? right_context_segment(text) : std::vector<int>{};

  int marker_count = 1 /*CLS*/ + 1 /*SEP*/ + (has_entity ? 1 : 0) + (joint ? 1 : 0) +
                     (has_mention ? 2 : 0);
  auto total = [&]() {
    return marker_count + static_cast<int>(label.size() + desc.size() + mention.size() +
                                           left.size() + right.size());
  };

  while (total() > max_len && !right.empty()) right.pop_back();
  while (total() > max_len && !left.empty()) left.pop_back();
  while (total() > max_len && !desc.empty()) desc.pop_back();
  if (total() > max_len) {
    throw ValidationError("protected mention/label tokens exceed max length " +
                          std::to_string(max_len));
  }

  TokenizedText out;
  out.special_positions["CLS"] = 0;
  out.tokens.push_back(Tokenizer::kCls);
  if (has_entity) {
    out.tokens.insert(out.tokens.end(), label.begin(), label.end());
    out.special_positions["DESC"] = out.length();
    out.tokens.push_back(Tokenizer::kDesc);
    out.tokens.insert(out.tokens.end(), desc.begin(), desc.end());
    if (joint) {
      out.special_positions["SEP_MID"] = out.length();
      out.tokens.push_back(Tokenizer::kSep);
    }
  }
  if (has_mention) {
    out.tokens.insert(out.tokens.end(), mention.begin(), mention.end());
    out.special_positions["CTX_L"] = out.length();
    out.tokens.push_back(Tokenizer::kCtxL);
    out.tokens.insert(out.tokens.end(), left.begin(), left.end());
    out.special_positions["CTX_R"] = out.length();
    out.tokens.push_back(Tokenizer::kCtxR);
    out.tokens.insert(out.tokens.end(), right.begin(), right.end());
  }
  out.special_positions["SEP"] = out.length();
  out.tokens.push_back(Tokenizer::kSep);
  return out;
}

}  // namespace kgx
