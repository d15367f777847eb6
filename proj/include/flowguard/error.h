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

#ifndef FLOWGUARD_ERROR_H_
#define FLOWGUARD_ERROR_H_

#include <stdexcept>
#include <string>

namespace flowguard {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operator applied to a value of the wrong kind.
class TypeMismatch : public Error {
 public:
  using Error::Error;
};

// Text input that does not follow a grammar. Line and column are 1-based;
// zero means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column = 0)
      : Error(Format(what, line, column)), line_(line), column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  static std::string Format(const std::string& what, int line, int column) {
    if (line <= 0) return what;
    std::string out = "line " + std::to_string(line);
    if (column > 0) out += ", column " + std::to_string(column);
    return out + ": " + what;
  }

  int line_;
  int column_;
};

class UnknownSource : public Error {
 public:
  using Error::Error;
};

class KindMismatch : public Error {
 public:
  using Error::Error;
};

class Unsupported : public Error {
 public:
  using Error::Error;
};

class DuplicateId : public Error {
 public:
  using Error::Error;
};

class InvalidPolicy : public Error {
 public:
  using Error::Error;
};

}  // namespace flowguard

#endif  // FLOWGUARD_ERROR_H_
