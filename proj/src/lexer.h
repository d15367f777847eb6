// Copyright 2026 The flowguard authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Tokenizer shared by the rule and policy readers.

#ifndef FLOWGUARD_SRC_LEXER_H_
#define FLOWGUARD_SRC_LEXER_H_

#include <string>
#include <string_view>
#include <vector>

#include "flowguard/model.h"

namespace flowguard::internal {

enum class TokenKind {
  kWord,    // identifiers, dotted sources, keywords
  kNumber,
  kString,  // quoted label, text holds the unescaped content
  kClock,   // "17:00" or the window "17:00-22:00"
  kSymbol,  // operators and punctuation
  kNewline, // only produced when the lexer is line-sensitive
  kEnd,
};

struct Token {
  TokenKind kind = TokenKind::kEnd;
  std::string text;
  double number = 0;
  int line = 0;
  int column = 0;
};

std::vector<Token> Tokenize(std::string_view text, bool keep_newlines);

class TokenStream {
 public:
  explicit TokenStream(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  const Token& Peek(size_t ahead = 0) const;
  Token Next();
  bool AtEnd() const { return Peek().kind == TokenKind::kEnd; }

  bool IsWord(std::string_view word, size_t ahead = 0) const;
  bool IsSymbol(std::string_view symbol, size_t ahead = 0) const;
  bool AcceptWord(std::string_view word);
  bool AcceptSymbol(std::string_view symbol);
  void ExpectWord(std::string_view word);
  void ExpectSymbol(std::string_view symbol);
  std::string ExpectIdentifier(std::string_view what);
  Source ExpectSource();
  Value ExpectValue();
  int64_t ExpectInteger(std::string_view what);
  double ExpectNumber(std::string_view what);
  void SkipNewlines();

  [[noreturn]] void Fail(const std::string& message) const;
  [[noreturn]] void Fail(const std::string& message, const Token& at) const;

 private:
  std::vector<Token> tokens_;
  size_t pos_ = 0;
};

std::string Describe(const Token& token);

}  // namespace flowguard::internal

#endif  // FLOWGUARD_SRC_LEXER_H_
