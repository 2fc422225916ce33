#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sgusql {

struct Token {
  std::string text;
  std::string lemma;
  std::size_t position = 0;
  // Byte offset of `text` in the source question.
  std::size_t offset = 0;
  // Whitespace preceding the first token of the question (empty elsewhere).
  std::string space_before;
  std::string space_after;
};

// Lossless split of a question into word and punctuation tokens; possessives
// ("'s") and contractions ("n't") become tokens of their own.
// Throws ValidationError when the question is blank.
std::vector<Token> tokenize(std::string_view question);

std::string detokenize(std::span<const Token> tokens);

// Rule-based lowercase lemma: plural and common verb suffixes stripped.
std::string lemmatize(std::string_view word);

// Terminal classes a token may take in the query grammar. A token can carry
// several classes ("which" is both `wh` and `rel`).
std::vector<std::string> token_classes(std::span<const Token> tokens,
                                       std::size_t index);

// Function words that never name a schema element.
bool is_stopword(std::string_view lemma);

// Lemmas of a schema label: lowercase, underscores as spaces.
std::vector<std::string> label_lemmas(std::string_view label);

bool is_pronoun(std::string_view lemma);

}  // namespace sgusql
