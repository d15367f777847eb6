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

// Core vocabulary shared by every module: data sources, attribute kinds,
// values, constraints and data items.

#ifndef FLOWGUARD_MODEL_H_
#define FLOWGUARD_MODEL_H_

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace flowguard {

inline constexpr double kNumericTolerance = 1e-9;
inline constexpr int kMinutesPerDay = 1440;

enum class SourceType { kDevice, kTime, kTimer };

std::string_view SourceTypeName(SourceType type);

// Addresses one data channel: a device attribute, a time feature or a timer.
struct Source {
  SourceType type = SourceType::kDevice;
  std::string subject;
  std::string attribute;

  static Source Device(std::string device, std::string attribute);
  static Source TimeOfDay();
  static Source Timer(std::string timer_id);

  // "device.MO1.motion". Parse also accepts the two-part device shorthand
  // "MO1.motion" and the bare word "time".
  std::string ToString() const;
  static Source Parse(std::string_view text);

  bool IsTimeOfDay() const;

  auto operator<=>(const Source&) const = default;
  bool operator==(const Source&) const = default;
};

enum class ValueKind { kBinary, kNumeric, kEnumerated };

std::string_view ValueKindName(ValueKind kind);

struct AttributeKind {
  ValueKind kind = ValueKind::kNumeric;
  // binary: {active-like, inactive-like}; enumerated: the value set.
  std::vector<std::string> labels;
  std::string unit;
  double min = 0;
  double max = 0;

  static AttributeKind Binary(std::string first, std::string second);
  static AttributeKind Numeric(std::string unit, double min, double max);
  static AttributeKind Enumerated(std::vector<std::string> values);

  // Throws KindMismatch when the invariants of the kind do not hold.
  void Validate() const;

  bool IsLabelKind() const { return kind != ValueKind::kNumeric; }
  bool HasLabel(std::string_view label) const;
  // For binary kinds, the member of the pair that is not `label`.
  const std::string& Other(std::string_view label) const;

  bool operator==(const AttributeKind&) const = default;
};

class Value {
 public:
  Value() : data_(0.0) {}
  Value(double number) : data_(number) {}             // NOLINT
  Value(int number) : data_(double(number)) {}         // NOLINT
  Value(std::string label) : data_(std::move(label)) {}  // NOLINT
  Value(const char* label) : data_(std::string(label)) {}  // NOLINT

  bool is_number() const { return std::holds_alternative<double>(data_); }
  bool is_label() const { return !is_number(); }
  double number() const;
  const std::string& label() const;

  // Numbers print in shortest round-trip form, labels verbatim.
  std::string ToString() const;
  // Labels that are not plain words are quoted, so the text re-lexes.
  std::string ToToken() const;

  bool operator==(const Value& other) const { return data_ == other.data_; }
  bool operator<(const Value& other) const { return data_ < other.data_; }

 private:
  std::variant<double, std::string> data_;
};

std::string FormatNumber(double value);

// Half-open window [start, end) in minutes of the day. A window whose start
// is after its end wraps past midnight.
struct TimeWindow {
  int start = 0;
  int end = 0;

  bool Contains(int minute) const;
  bool Wraps() const { return start > end; }
  TimeWindow Complement() const { return {end, start}; }
  // "17:00-22:00"
  std::string ToString() const;
  static TimeWindow Parse(std::string_view text);

  bool operator==(const TimeWindow&) const = default;
};

std::string FormatClock(int minute);
int ParseClock(std::string_view text);

enum class Op { kEq, kNe, kLt, kLe, kGt, kGe, kIn, kNotIn, kInWindow };

std::string_view OpSymbol(Op op);
std::optional<Op> ParseOp(std::string_view symbol);

struct Constraint {
  Op op = Op::kEq;
  Value value;
  std::vector<Value> set;
  TimeWindow window;

  static Constraint Compare(Op op, Value value);
  static Constraint InSet(std::vector<Value> values, bool negated = false);
  static Constraint Within(TimeWindow window);

  // The constraint satisfied by exactly the values that violate this one.
  Constraint Negated() const;
  // "== open", "in {a, b}", "inwindow 17:00-22:00"
  std::string ToString() const;

  bool operator==(const Constraint&) const = default;
};

// True when `value` satisfies `constraint`. Throws TypeMismatch when the
// operator cannot be applied to the value.
bool Satisfy(const Value& value, const Constraint& constraint);

// True when the constraint can be applied to values of `kind`.
bool Compatible(const Constraint& constraint, const AttributeKind& kind);

bool Match(const Source& source, const Source& pattern);

struct DataItem {
  Source source;
  Value value;
  int64_t timestamp = 0;

  bool operator==(const DataItem&) const = default;
};

int MinuteOfDay(int64_t ms);

}  // namespace flowguard

#endif  // FLOWGUARD_MODEL_H_
