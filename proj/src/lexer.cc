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

#include "lexer.h"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include "flowguard/error.h"

namespace flowguard::internal {
namespace {

bool IsDigit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool IsAlpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

class Lexer {
 public:
  Lexer(std::string_view text, bool keep_newlines)
      : text_(text), keep_newlines_(keep_newlines) {}

  std::vector<Token> Run() {
    std::vector<Token> out;
    while (true) {
      SkipSpace();
      Token token;
      token.line = line_;
      token.column = column_;
      if (pos_ >= text_.size()) {
        token.kind = TokenKind::kEnd;
        out.push_back(token);
        return out;
      }
      char c = text_[pos_];
      if (c == '\n') {
        Advance();
        token.kind = TokenKind::kNewline;
        token.text = "\n";
        out.push_back(token);
        continue;
      }
      if (c == '"') {
        token.kind = TokenKind::kString;
        token.text = ReadString();
      } else if (IsDigit(c) || (c == '-' && IsDigit(At(1)) && !PrevIsOperand(out))) {
        ReadNumberOrClock(&token);
      } else if (IsAlpha(c) || c == '_') {
        token.kind = TokenKind::kWord;
        token.text = ReadWord();
      } else {
        token.kind = TokenKind::kSymbol;
        token.text = ReadSymbol();
      }
      out.push_back(token);
    }
  }

 private:
  char At(size_t ahead) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  void Advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  [[noreturn]] void Fail(const std::string& message) const {
    throw ParseError(message, line_, column_);
  }

  void SkipSpace() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') Advance();
      } else if (c == '\n' && keep_newlines_) {
        return;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        Advance();
      } else {
        return;
      }
    }
  }

  // A '-' directly after a value is a range dash, not a sign.
  static bool PrevIsOperand(const std::vector<Token>& out) {
    if (out.empty()) return false;
    const Token& prev = out.back();
    return prev.kind == TokenKind::kNumber || prev.kind == TokenKind::kClock;
  }

  std::string ReadString() {
    Advance();  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= text_.size() || text_[pos_] == '\n') Fail("unterminated string");
      char c = text_[pos_];
      if (c == '"') {
        Advance();
        return out;
      }
      if (c == '\\') {
        Advance();
        if (pos_ >= text_.size()) Fail("unterminated string");
        c = text_[pos_];
      }
      out += c;
      Advance();
    }
  }

  std::string ReadWord() {
    std::string out;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      bool ok = IsAlpha(c) || IsDigit(c) || c == '_' || c == '.';
      if (c == '-' && At(1) != '>') ok = true;
      if (!ok) break;
      out += c;
      Advance();
    }
    while (!out.empty() && (out.back() == '.' || out.back() == '-')) {
      Fail("malformed word '" + out + "'");
    }
    return out;
  }

  std::string ReadDigits() {
    std::string out;
    while (IsDigit(At(0))) {
      out += At(0);
      Advance();
    }
    return out;
  }

  void ReadNumberOrClock(Token* token) {
    std::string text;
    if (At(0) == '-') {
      text += '-';
      Advance();
    }
    text += ReadDigits();
    if (At(0) == ':' && IsDigit(At(1)) && text[0] != '-') {
      Advance();
      text += ':';
      text += ReadDigits();
      if (At(0) == '-' && IsDigit(At(1))) {
        Advance();
        text += '-';
        text += ReadDigits();
        if (At(0) != ':') Fail("malformed time window '" + text + "'");
        Advance();
        text += ':';
        text += ReadDigits();
      }
      token->kind = TokenKind::kClock;
      token->text = text;
      return;
    }
    if (At(0) == '.' && IsDigit(At(1))) {
      text += '.';
      Advance();
      text += ReadDigits();
    }
    if ((At(0) == 'e' || At(0) == 'E') &&
        (IsDigit(At(1)) || ((At(1) == '-' || At(1) == '+') && IsDigit(At(2))))) {
      text += At(0);
      Advance();
      if (At(0) == '-' || At(0) == '+') {
        text += At(0);
        Advance();
      }
      text += ReadDigits();
    }
    // A unit suffix such as "5m" or "300ms" stays attached as a word.
    if (IsAlpha(At(0))) {
      std::string suffix;
      while (IsAlpha(At(0))) {
        suffix += At(0);
        Advance();
      }
      token->kind = TokenKind::kWord;
      token->text = text + suffix;
      return;
    }
    token->kind = TokenKind::kNumber;
    token->text = text;
    token->number = std::strtod(text.c_str(), nullptr);
  }

  std::string ReadSymbol() {
    static const char* kTwo[] = {"==", "!=", "<=", ">=", "->"};
    for (const char* sym : kTwo) {
      if (At(0) == sym[0] && At(1) == sym[1]) {
        Advance();
        Advance();
        return sym;
      }
    }
    char c = At(0);
    static const std::string kOne = "<>{}[](),:=-";
    if (kOne.find(c) == std::string::npos) {
      Fail(std::string("unexpected character '") + c + "'");
    }
    Advance();
    return std::string(1, c);
  }

  std::string_view text_;
  bool keep_newlines_;
  size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

}  // namespace

std::vector<Token> Tokenize(std::string_view text, bool keep_newlines) {
  return Lexer(text, keep_newlines).Run();
}

std::string Describe(const Token& token) {
  switch (token.kind) {
    case TokenKind::kEnd: return "end of input";
    case TokenKind::kNewline: return "end of line";
    case TokenKind::kString: return "\"" + token.text + "\"";
    default: return "'" + token.text + "'";
  }
}

const Token& TokenStream::Peek(size_t ahead) const {
  size_t index = std::min(pos_ + ahead, tokens_.size() - 1);
  return tokens_[index];
}

Token TokenStream::Next() {
  Token token = Peek();
  if (pos_ < tokens_.size() - 1) ++pos_;
  return token;
}

bool TokenStream::IsWord(std::string_view word, size_t ahead) const {
  const Token& t = Peek(ahead);
  return t.kind == TokenKind::kWord && t.text == word;
}

bool TokenStream::IsSymbol(std::string_view symbol, size_t ahead) const {
  const Token& t = Peek(ahead);
  return t.kind == TokenKind::kSymbol && t.text == symbol;
}

bool TokenStream::AcceptWord(std::string_view word) {
  if (!IsWord(word)) return false;
  Next();
  return true;
}

bool TokenStream::AcceptSymbol(std::string_view symbol) {
  if (!IsSymbol(symbol)) return false;
  Next();
  return true;
}

void TokenStream::ExpectWord(std::string_view word) {
  if (!AcceptWord(word)) {
    Fail("expected '" + std::string(word) + "', found " + Describe(Peek()));
  }
}

void TokenStream::ExpectSymbol(std::string_view symbol) {
  if (!AcceptSymbol(symbol)) {
    Fail("expected '" + std::string(symbol) + "', found " + Describe(Peek()));
  }
}

std::string TokenStream::ExpectIdentifier(std::string_view what) {
  if (Peek().kind != TokenKind::kWord) {
    Fail("expected " + std::string(what) + ", found " + Describe(Peek()));
  }
  return Next().text;
}

Source TokenStream::ExpectSource() {
  const Token& t = Peek();
  if (t.kind != TokenKind::kWord) Fail("expected a source, found " + Describe(t));
  try {
    Source source = Source::Parse(t.text);
    Next();
    return source;
  } catch (const ParseError& e) {
    Fail(e.what(), t);
  }
}

Value TokenStream::ExpectValue() {
  const Token& t = Peek();
  switch (t.kind) {
    case TokenKind::kNumber: {
      double v = Next().number;
      return Value(v);
    }
    case TokenKind::kString:
    case TokenKind::kWord:
      return Value(Next().text);
    case TokenKind::kClock:
      if (t.text.find('-') == std::string::npos) {
        try {
          int minute = ParseClock(t.text);
          Next();
          return Value(minute);
        } catch (const ParseError& e) {
          Fail(e.what(), t);
        }
      }
      [[fallthrough]];
    default:
      Fail("expected a value, found " + Describe(t));
  }
}

int64_t TokenStream::ExpectInteger(std::string_view what) {
  const Token& t = Peek();
  if (t.kind != TokenKind::kNumber || t.number != std::floor(t.number)) {
    Fail("expected " + std::string(what) + ", found " + Describe(t));
  }
  return static_cast<int64_t>(Next().number);
}

double TokenStream::ExpectNumber(std::string_view what) {
  const Token& t = Peek();
  if (t.kind != TokenKind::kNumber) {
    Fail("expected " + std::string(what) + ", found " + Describe(t));
  }
  return Next().number;
}

void TokenStream::SkipNewlines() {
  while (Peek().kind == TokenKind::kNewline) Next();
}

void TokenStream::Fail(const std::string& message) const { Fail(message, Peek()); }

void TokenStream::Fail(const std::string& message, const Token& at) const {
  throw ParseError(message, at.line, at.column);
}

}  // namespace flowguard::internal
