#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "depx/text/unicode.hpp"

namespace depx::text {

// Splits after every run of '.', '!' or '?' that is followed by whitespace.
// Pieces are trimmed; empty pieces are dropped.
inline std::vector<std::string> split_sentences(std::string_view raw) {
  const auto cps = code_points(raw);
  std::vector<std::string> out;
  auto flush = [&](std::size_t b, std::size_t e) {
    while (b < e && is_space(cps[b])) ++b;
    while (e > b && is_space(cps[e - 1])) --e;
    if (b < e) out.push_back(to_utf8(cps, b, e));
  };
  auto terminal = [](UChar32 c) { return c == U'.' || c == U'!' || c == U'?'; };
  std::size_t start = 0, i = 0;
  while (i < cps.size()) {
    if (terminal(cps[i])) {
      std::size_t j = i;
      while (j < cps.size() && terminal(cps[j])) ++j;
      if (j < cps.size() && is_space(cps[j])) {
        flush(start, j);
        start = j;
      }
      i = j;
    } else {
      ++i;
    }
  }
  flush(start, cps.size());
  return out;
}

// Whitespace tokenization with punctuation stripped from both token edges.
inline std::vector<std::string> tokenize(std::string_view sentence) {
  const auto cps = code_points(sentence);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_space(cps[i])) ++i;
    std::size_t j = i;
    while (j < cps.size() && !is_space(cps[j])) ++j;
    std::size_t b = i, e = j;
    while (b < e && u_ispunct(cps[b])) ++b;
    while (e > b && u_ispunct(cps[e - 1])) --e;
    if (b < e) out.push_back(to_utf8(cps, b, e));
    i = j;
  }
  return out;
}

// A post as the encoder consumes it: at most L sentences of at most T tokens.
struct TokenizedPost {
  std::string id;
  std::string text;
  std::vector<std::string> sentence_texts;
  std::vector<std::vector<std::string>> sentences;
  std::optional<int> label;

  std::size_t sentence_count() const { return sentences.size(); }
};

inline TokenizedPost tokenize_post(std::string id, std::string text, std::optional<int> label, std::size_t max_sentences,
                                   std::size_t max_tokens) {
  if (max_sentences == 0 || max_tokens == 0) throw ConfigError("max_sentences and max_tokens must be positive");
  TokenizedPost post{std::move(id), std::move(text), {}, {}, label};
  for (auto& s : split_sentences(post.text)) {
    auto toks = tokenize(s);
    if (toks.empty()) continue;
    if (toks.size() > max_tokens) toks.resize(max_tokens);
    post.sentence_texts.push_back(std::move(s));
    post.sentences.push_back(std::move(toks));
    if (post.sentences.size() == max_sentences) break;
  }
  if (post.sentences.empty()) throw ValidationError("post \"" + post.id + "\" contains no tokens");
  return post;
}

}  // namespace depx::text
