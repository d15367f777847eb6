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

#include "flowguard/model.h"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <charconv>
#include <cmath>
#include <set>

#include "flowguard/error.h"

namespace flowguard {
namespace {

std::vector<std::string_view> Split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  size_t start = 0;
  while (true) {
    size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

bool IsWordChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

bool IsPlainWord(std::string_view text) {
  if (text.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(text[0])) && text[0] != '_') {
    return false;
  }
  return std::all_of(text.begin(), text.end(), IsWordChar);
}

bool NumEq(double a, double b) { return std::fabs(a - b) <= kNumericTolerance; }

}  // namespace

std::string_view SourceTypeName(SourceType type) {
  switch (type) {
    case SourceType::kDevice: return "device";
    case SourceType::kTime: return "time";
    case SourceType::kTimer: return "timer";
  }
  return "device";
}

Source Source::Device(std::string device, std::string attribute) {
  return {SourceType::kDevice, std::move(device), std::move(attribute)};
}

Source Source::TimeOfDay() { return {SourceType::kTime, "clock", "time-of-day"}; }

Source Source::Timer(std::string timer_id) {
  return {SourceType::kTimer, "timer", std::move(timer_id)};
}

bool Source::IsTimeOfDay() const {
  return type == SourceType::kTime && attribute == "time-of-day";
}

std::string Source::ToString() const {
  std::string out(SourceTypeName(type));
  out += '.';
  out += subject;
  out += '.';
  out += attribute;
  return out;
}

Source Source::Parse(std::string_view text) {
  if (text == "time") return TimeOfDay();
  auto parts = Split(text, '.');
  for (auto part : parts) {
    if (part.empty() || !std::all_of(part.begin(), part.end(), IsWordChar)) {
      throw ParseError("malformed source '" + std::string(text) + "'", 0);
    }
  }
  if (parts.size() == 2) {
    return Device(std::string(parts[0]), std::string(parts[1]));
  }
  if (parts.size() != 3) {
    throw ParseError("malformed source '" + std::string(text) + "'", 0);
  }
  Source source{SourceType::kDevice, std::string(parts[1]), std::string(parts[2])};
  if (parts[0] == "device") {
    source.type = SourceType::kDevice;
  } else if (parts[0] == "time") {
    source.type = SourceType::kTime;
  } else if (parts[0] == "timer") {
    source.type = SourceType::kTimer;
  } else {
    throw ParseError("unknown source type '" + std::string(parts[0]) + "'", 0);
  }
  return source;
}

std::string_view ValueKindName(ValueKind kind) {
  switch (kind) {
    case ValueKind::kBinary: return "binary";
    case ValueKind::kNumeric: return "numeric";
    case ValueKind::kEnumerated: return "enumerated";
  }
  return "numeric";
}

AttributeKind AttributeKind::Binary(std::string first, std::string second) {
  AttributeKind kind;
  kind.kind = ValueKind::kBinary;
  kind.labels = {std::move(first), std::move(second)};
  kind.Validate();
  return kind;
}

AttributeKind AttributeKind::Numeric(std::string unit, double min, double max) {
  AttributeKind kind;
  kind.kind = ValueKind::kNumeric;
  kind.unit = std::move(unit);
  kind.min = min;
  kind.max = max;
  kind.Validate();
  return kind;
}

AttributeKind AttributeKind::Enumerated(std::vector<std::string> values) {
  AttributeKind kind;
  kind.kind = ValueKind::kEnumerated;
  kind.labels = std::move(values);
  kind.Validate();
  return kind;
}

void AttributeKind::Validate() const {
  switch (kind) {
    case ValueKind::kNumeric:
      if (!(min < max)) throw KindMismatch("numeric kind needs min < max");
      return;
    case ValueKind::kBinary:
      if (labels.size() != 2 || labels[0] == labels[1]) {
        throw KindMismatch("binary kind needs two distinct values");
      }
      return;
    case ValueKind::kEnumerated: {
      if (labels.empty()) throw KindMismatch("enumerated kind needs values");
      std::set<std::string> seen(labels.begin(), labels.end());
      if (seen.size() != labels.size()) {
        throw KindMismatch("enumerated kind has duplicate values");
      }
      return;
    }
  }
}

bool AttributeKind::HasLabel(std::string_view label) const {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

const std::string& AttributeKind::Other(std::string_view label) const {
  if (kind != ValueKind::kBinary || !HasLabel(label)) {
    throw KindMismatch("no opposite of '" + std::string(label) + "'");
  }
  return labels[0] == label ? labels[1] : labels[0];
}

double Value::number() const {
  if (!is_number()) throw TypeMismatch("value '" + label() + "' is not a number");
  return std::get<double>(data_);
}

const std::string& Value::label() const {
  if (is_number()) {
    throw TypeMismatch("value " + FormatNumber(std::get<double>(data_)) +
                       " is not a label");
  }
  return std::get<std::string>(data_);
}

std::string FormatNumber(double value) {
  if (value == 0) value = 0;  // drop the sign of -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

std::string Value::ToString() const {
  return is_number() ? FormatNumber(number()) : label();
}

std::string Value::ToToken() const {
  if (is_number()) return FormatNumber(number());
  const std::string& text = label();
  if (IsPlainWord(text)) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

bool TimeWindow::Contains(int minute) const {
  if (start <= end) return minute >= start && minute < end;
  return minute >= start || minute < end;
}

std::string FormatClock(int minute) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", minute / 60, minute % 60);
  return buf;
}

int ParseClock(std::string_view text) {
  auto parts = Split(text, ':');
  if (parts.size() != 2 || parts[0].empty() || parts[1].size() != 2) {
    throw ParseError("malformed clock time '" + std::string(text) + "'", 0);
  }
  int hours = 0;
  int minutes = 0;
  auto r1 = std::from_chars(parts[0].data(), parts[0].data() + parts[0].size(), hours);
  auto r2 = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), minutes);
  if (r1.ec != std::errc() || r1.ptr != parts[0].data() + parts[0].size() ||
      r2.ec != std::errc() || r2.ptr != parts[1].data() + parts[1].size() ||
      minutes > 59 || hours > 24 || (hours == 24 && minutes != 0)) {
    throw ParseError("malformed clock time '" + std::string(text) + "'", 0);
  }
  return (hours * 60 + minutes) % kMinutesPerDay;
}

std::string TimeWindow::ToString() const {
  return FormatClock(start) + "-" + FormatClock(end);
}

TimeWindow TimeWindow::Parse(std::string_view text) {
  size_t dash = text.find('-');
  if (dash == std::string_view::npos) {
    throw ParseError("malformed time window '" + std::string(text) + "'", 0);
  }
  TimeWindow window{ParseClock(text.substr(0, dash)), ParseClock(text.substr(dash + 1))};
  if (window.start == window.end) {
    throw ParseError("empty time window '" + std::string(text) + "'", 0);
  }
  return window;
}

std::string_view OpSymbol(Op op) {
  switch (op) {
    case Op::kEq: return "==";
    case Op::kNe: return "!=";
    case Op::kLt: return "<";
    case Op::kLe: return "<=";
    case Op::kGt: return ">";
    case Op::kGe: return ">=";
    case Op::kIn: return "in";
    case Op::kNotIn: return "notin";
    case Op::kInWindow: return "inwindow";
  }
  return "==";
}

std::optional<Op> ParseOp(std::string_view symbol) {
  static constexpr Op kAll[] = {Op::kEq, Op::kNe, Op::kLt, Op::kLe, Op::kGt,
                                Op::kGe, Op::kIn, Op::kNotIn, Op::kInWindow};
  for (Op op : kAll) {
    if (OpSymbol(op) == symbol) return op;
  }
  return std::nullopt;
}

Constraint Constraint::Compare(Op op, Value value) {
  Constraint c;
  c.op = op;
  c.value = std::move(value);
  return c;
}

Constraint Constraint::InSet(std::vector<Value> values, bool negated) {
  Constraint c;
  c.op = negated ? Op::kNotIn : Op::kIn;
  c.set = std::move(values);
  return c;
}

Constraint Constraint::Within(TimeWindow window) {
  Constraint c;
  c.op = Op::kInWindow;
  c.window = window;
  return c;
}

Constraint Constraint::Negated() const {
  Constraint c = *this;
  switch (op) {
    case Op::kEq: c.op = Op::kNe; break;
    case Op::kNe: c.op = Op::kEq; break;
    case Op::kLt: c.op = Op::kGe; break;
    case Op::kLe: c.op = Op::kGt; break;
    case Op::kGt: c.op = Op::kLe; break;
    case Op::kGe: c.op = Op::kLt; break;
    case Op::kIn: c.op = Op::kNotIn; break;
    case Op::kNotIn: c.op = Op::kIn; break;
    case Op::kInWindow: c.window = window.Complement(); break;
  }
  return c;
}

std::string Constraint::ToString() const {
  std::string out(OpSymbol(op));
  out += ' ';
  switch (op) {
    case Op::kIn:
    case Op::kNotIn: {
      out += '{';
      for (size_t i = 0; i < set.size(); ++i) {
        if (i) out += ", ";
        out += set[i].ToToken();
      }
      out += '}';
      break;
    }
    case Op::kInWindow:
      out += window.ToString();
      break;
    default:
      out += value.ToToken();
  }
  return out;
}

bool Satisfy(const Value& value, const Constraint& constraint) {
  auto same_type = [&](const Value& other) {
    if (value.is_number() != other.is_number()) {
      throw TypeMismatch("cannot compare '" + value.ToString() + "' with '" +
                         other.ToString() + "'");
    }
  };
  auto equal = [&](const Value& other) {
    same_type(other);
    if (value.is_number()) return NumEq(value.number(), other.number());
    return value.label() == other.label();
  };
  switch (constraint.op) {
    case Op::kEq: return equal(constraint.value);
    case Op::kNe: return !equal(constraint.value);
    case Op::kLt:
    case Op::kLe:
    case Op::kGt:
    case Op::kGe: {
      if (!value.is_number() || !constraint.value.is_number()) {
        throw TypeMismatch(std::string("operator ") +
                           std::string(OpSymbol(constraint.op)) +
                           " needs numbers");
      }
      double a = value.number();
      double b = constraint.value.number();
      switch (constraint.op) {
        case Op::kLt: return a < b;
        case Op::kLe: return a <= b;
        case Op::kGt: return a > b;
        default: return a >= b;
      }
    }
    case Op::kIn:
    case Op::kNotIn: {
      bool found = false;
      for (const Value& member : constraint.set) {
        if (equal(member)) found = true;
      }
      return constraint.op == Op::kIn ? found : !found;
    }
    case Op::kInWindow: {
      if (!value.is_number()) {
        throw TypeMismatch("inwindow needs a minute-of-day number");
      }
      double minute = value.number();
      if (minute < 0 || minute >= kMinutesPerDay) {
        throw TypeMismatch("minute of day out of range");
      }
      return constraint.window.Contains(static_cast<int>(minute));
    }
  }
  return false;
}

bool Compatible(const Constraint& constraint, const AttributeKind& kind) {
  auto label_ok = [&](const Value& v) {
    return v.is_label() && kind.HasLabel(v.label());
  };
  switch (constraint.op) {
    case Op::kEq:
    case Op::kNe:
      return kind.IsLabelKind() ? label_ok(constraint.value)
                                : constraint.value.is_number();
    case Op::kLt:
    case Op::kLe:
    case Op::kGt:
    case Op::kGe:
      return !kind.IsLabelKind() && constraint.value.is_number();
    case Op::kIn:
    case Op::kNotIn:
      if (constraint.set.empty()) return false;
      for (const Value& v : constraint.set) {
        if (kind.IsLabelKind() ? !label_ok(v) : !v.is_number()) return false;
      }
      return true;
    case Op::kInWindow:
      return !kind.IsLabelKind() && kind.unit == "minute-of-day";
  }
  return false;
}

bool Match(const Source& source, const Source& pattern) {
  return source.type == pattern.type && source.subject == pattern.subject &&
         source.attribute == pattern.attribute;
}

int MinuteOfDay(int64_t ms) {
  int64_t minutes = ms / 60000;
  int64_t m = minutes % kMinutesPerDay;
  if (m < 0) m += kMinutesPerDay;
  return static_cast<int>(m);
}

}  // namespace flowguard
