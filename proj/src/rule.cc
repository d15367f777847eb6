#include "flowguard/rule.h"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flowguard/error.h"
#include "lexer.h"

namespace flowguard {

using internal::Token;
using internal::TokenKind;
using internal::TokenStream;
using nlohmann::json;

Command Command::Set(Source target, Value value) {
  Command c;
  c.kind = Kind::kSet;
  c.target = std::move(target);
  c.value = std::move(value);
  return c;
}

Command Command::Notify(std::string message) {
  Command c;
  c.kind = Kind::kNotify;
  c.message = std::move(message);
  return c;
}

std::vector<Source> Rule::Targets() const {
  std::vector<Source> out;
  for (const Command& c : actions) {
    if (c.kind == Command::Kind::kSet) out.push_back(c.target);
  }
  return out;
}

int64_t ParseDuration(std::string_view text) {
  size_t i = 0;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
  if (i == 0) throw ParseError("malformed duration '" + std::string(text) + "'", 0);
  int64_t amount = std::stoll(std::string(text.substr(0, i)));
  std::string_view unit = text.substr(i);
  if (unit == "ms") return amount;
  if (unit == "s") return amount * 1000;
  if (unit == "m" || unit == "min") return amount * 60'000;
  if (unit == "h") return amount * 3'600'000;
  throw ParseError("unknown duration unit in '" + std::string(text) + "'", 0);
}

std::string FormatDuration(int64_t ms) {
  if (ms > 0 && ms % 3'600'000 == 0) return std::to_string(ms / 3'600'000) + "h";
  if (ms > 0 && ms % 60'000 == 0) return std::to_string(ms / 60'000) + "m";
  if (ms > 0 && ms % 1000 == 0) return std::to_string(ms / 1000) + "s";
  return std::to_string(ms) + "ms";
}

namespace {

void CheckConstraint(const Source& source, const Constraint& c,
                     const DeviceRegistry& registry, const std::string& rule_id) {
  const AttributeKind& kind = registry.Kind(source);
  std::string where = "rule " + rule_id + ", " + source.ToString();
  if (!Compatible(c, kind)) {
    throw KindMismatch(where + ": operator '" + std::string(OpSymbol(c.op)) +
                       "' does not apply");
  }
  auto check = [&](const Value& v) {
    if (kind.IsLabelKind()) {
      CheckValueOfKind(kind, v, where);
    } else if (!v.is_number()) {
      throw KindMismatch(where + ": '" + v.ToString() + "' is not a number");
    }
  };
  if (c.op == Op::kIn || c.op == Op::kNotIn) {
    for (const Value& v : c.set) check(v);
  } else if (c.op != Op::kInWindow) {
    check(c.value);
  }
}

void RequireKnown(const Source& source, const DeviceRegistry& registry,
                  const std::string& rule_id) {
  if (!registry.Has(source)) {
    throw UnknownSource("rule " + rule_id + ": unknown source " + source.ToString());
  }
}

}  // namespace

void ValidateRule(const Rule& rule, const DeviceRegistry& registry) {
  if (rule.id.empty()) throw ParseError("rule without id", 0);
  if (rule.event_source.type == SourceType::kTimer) {
    throw KindMismatch("rule " + rule.id + ": a timer cannot trigger a rule");
  }
  RequireKnown(rule.event_source, registry, rule.id);
  CheckConstraint(rule.event_source, rule.event, registry, rule.id);
  for (const Condition& c : rule.conditions) {
    if (c.source.type != SourceType::kDevice) {
      throw KindMismatch("rule " + rule.id + ": conditions address devices; use 'between'");
    }
    RequireKnown(c.source, registry, rule.id);
    CheckConstraint(c.source, c.constraint, registry, rule.id);
  }
  if (rule.sustained_for && *rule.sustained_for < 0) {
    throw KindMismatch("rule " + rule.id + ": negative duration");
  }
  if (rule.actions.empty()) throw KindMismatch("rule " + rule.id + ": no actions");
  for (const Command& cmd : rule.actions) {
    if (cmd.kind == Command::Kind::kNotify) continue;
    RequireKnown(cmd.target, registry, rule.id);
    if (cmd.target.type != SourceType::kDevice || !registry.Spec(cmd.target).commandable) {
      throw KindMismatch("rule " + rule.id + ": " + cmd.target.ToString() +
                         " cannot be commanded");
    }
    registry.CheckValue(cmd.target, cmd.value);
  }
}

// ---------------------------------------------------------------------------
// Line form

namespace {

std::string SourceText(const Source& s) {
  if (s.type == SourceType::kDevice) return s.subject + "." + s.attribute;
  if (s.IsTimeOfDay()) return "time";
  return s.ToString();
}

std::string ValueText(const Source& source, const Value& v) {
  if (source.IsTimeOfDay() && v.is_number() && v.number() >= 0 &&
      v.number() < kMinutesPerDay && v.number() == static_cast<int>(v.number())) {
    return FormatClock(static_cast<int>(v.number()));
  }
  return v.ToToken();
}

std::string ConstraintText(const Source& source, const Constraint& c) {
  std::string op(OpSymbol(c.op));
  if (c.op == Op::kInWindow) return op + " " + c.window.ToString();
  if (c.op == Op::kIn || c.op == Op::kNotIn) {
    std::string out = op + " {";
    for (size_t i = 0; i < c.set.size(); ++i) {
      if (i) out += ", ";
      out += ValueText(source, c.set[i]);
    }
    return out + "}";
  }
  return op + " " + ValueText(source, c.value);
}

class RuleLineParser {
 public:
  explicit RuleLineParser(std::string_view text) : in_(internal::Tokenize(text, true)) {}

  std::vector<Rule> ParseAll() {
    std::vector<Rule> rules;
    while (true) {
      in_.SkipNewlines();
      if (in_.AtEnd()) return rules;
      rules.push_back(ParseOne());
      if (!in_.AtEnd() && in_.Peek().kind != TokenKind::kNewline) {
        in_.Fail("expected end of rule, found " + internal::Describe(in_.Peek()));
      }
    }
  }

 private:
  Rule ParseOne() {
    Rule rule;
    rule.id = in_.ExpectIdentifier("rule id");
    in_.ExpectSymbol(":");
    in_.ExpectWord("when");
    rule.event_source = in_.ExpectSource();
    rule.event = ParseConstraint();
    if (in_.AcceptWord("for")) {
      const Token& t = in_.Peek();
      if (t.kind != TokenKind::kWord) in_.Fail("expected a duration such as 5m");
      try {
        rule.sustained_for = ParseDuration(t.text);
      } catch (const ParseError& e) {
        in_.Fail(e.what(), t);
      }
      in_.Next();
    }
    if (in_.AcceptWord("if")) {
      do {
        Condition c;
        c.source = in_.ExpectSource();
        c.constraint = ParseConstraint();
        rule.conditions.push_back(std::move(c));
      } while (in_.AcceptWord("and"));
    }
    if (in_.AcceptWord("between")) {
      const Token& t = in_.Peek();
      if (t.kind != TokenKind::kClock) in_.Fail("expected a window such as 08:00-18:00");
      try {
        rule.time_window = TimeWindow::Parse(t.text);
      } catch (const ParseError& e) {
        in_.Fail(e.what(), t);
      }
      in_.Next();
    }
    in_.ExpectWord("then");
    do {
      if (in_.AcceptWord("set")) {
        Source target = in_.ExpectSource();
        rule.actions.push_back(Command::Set(std::move(target), in_.ExpectValue()));
      } else if (in_.AcceptWord("notify")) {
        const Token& t = in_.Peek();
        if (t.kind != TokenKind::kString) in_.Fail("expected a quoted message");
        rule.actions.push_back(Command::Notify(in_.Next().text));
      } else {
        in_.Fail("expected 'set' or 'notify', found " + internal::Describe(in_.Peek()));
      }
    } while (in_.AcceptSymbol(","));
    return rule;
  }

  Constraint ParseConstraint() {
    const Token& t = in_.Peek();
    std::optional<Op> op;
    if (t.kind == TokenKind::kSymbol || t.kind == TokenKind::kWord) op = ParseOp(t.text);
    if (!op) in_.Fail("expected an operator, found " + internal::Describe(t));
    in_.Next();
    if (*op == Op::kInWindow) {
      const Token& w = in_.Peek();
      if (w.kind != TokenKind::kClock) in_.Fail("expected a time window");
      try {
        TimeWindow window = TimeWindow::Parse(w.text);
        in_.Next();
        return Constraint::Within(window);
      } catch (const ParseError& e) {
        in_.Fail(e.what(), w);
      }
    }
    if (*op == Op::kIn || *op == Op::kNotIn) {
      std::vector<Value> values;
      in_.ExpectSymbol("{");
      if (!in_.AcceptSymbol("}")) {
        do {
          values.push_back(in_.ExpectValue());
        } while (in_.AcceptSymbol(","));
        in_.ExpectSymbol("}");
      }
      return Constraint::InSet(std::move(values), *op == Op::kNotIn);
    }
    return Constraint::Compare(*op, in_.ExpectValue());
  }

  TokenStream in_;
};

// ---------------------------------------------------------------------------
// JSON form

Value JsonValue(const json& j) {
  if (j.is_number()) return Value(j.get<double>());
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    if (s.find(':') != std::string::npos) {
      try {
        return Value(ParseClock(s));
      } catch (const ParseError&) {
      }
    }
    return Value(s);
  }
  throw ParseError("rule values are numbers or strings, found " + j.dump(), 0);
}

json ValueJson(const Value& v) {
  if (v.is_number()) return v.number();
  return v.label();
}

Constraint JsonConstraint(const json& j) {
  std::string op_text = j.at("op").get<std::string>();
  std::optional<Op> op = ParseOp(op_text);
  if (!op) throw ParseError("unknown operator '" + op_text + "'", 0);
  const json& v = j.at("value");
  if (*op == Op::kInWindow) return Constraint::Within(TimeWindow::Parse(v.get<std::string>()));
  if (*op == Op::kIn || *op == Op::kNotIn) {
    std::vector<Value> values;
    for (const json& e : v) values.push_back(JsonValue(e));
    return Constraint::InSet(std::move(values), *op == Op::kNotIn);
  }
  return Constraint::Compare(*op, JsonValue(v));
}

json ConstraintJson(const Source& source, const Constraint& c) {
  json out;
  out["source"] = SourceText(source);
  out["op"] = std::string(OpSymbol(c.op));
  if (c.op == Op::kInWindow) {
    out["value"] = c.window.ToString();
  } else if (c.op == Op::kIn || c.op == Op::kNotIn) {
    json arr = json::array();
    for (const Value& v : c.set) arr.push_back(ValueJson(v));
    out["value"] = arr;
  } else {
    out["value"] = ValueJson(c.value);
  }
  return out;
}

Rule JsonRule(const json& j) {
  Rule rule;
  rule.id = j.at("id").get<std::string>();
  const json& when = j.at("when");
  rule.event_source = Source::Parse(when.at("source").get<std::string>());
  rule.event = JsonConstraint(when);
  if (j.contains("for")) {
    const json& f = j.at("for");
    rule.sustained_for = f.is_number() ? f.get<int64_t>() : ParseDuration(f.get<std::string>());
  }
  if (j.contains("if")) {
    for (const json& c : j.at("if")) {
      rule.conditions.push_back(
          {Source::Parse(c.at("source").get<std::string>()), JsonConstraint(c)});
    }
  }
  if (j.contains("between")) {
    rule.time_window = TimeWindow::Parse(j.at("between").get<std::string>());
  }
  for (const json& a : j.at("then")) {
    if (a.contains("notify")) {
      rule.actions.push_back(Command::Notify(a.at("notify").get<std::string>()));
    } else {
      rule.actions.push_back(Command::Set(Source::Parse(a.at("set").get<std::string>()),
                                          JsonValue(a.at("value"))));
    }
  }
  return rule;
}

std::vector<Rule> ParseJsonRules(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), 0);
  }
  const json& list = doc.is_array() ? doc : doc.at("rules");
  std::vector<Rule> rules;
  try {
    for (const json& j : list) rules.push_back(JsonRule(j));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed rule: ") + e.what(), 0);
  }
  return rules;
}

}  // namespace

std::vector<Rule> ParseRules(std::string_view text, const DeviceRegistry& registry) {
  size_t first = text.find_first_not_of(" \t\r\n");
  std::vector<Rule> rules;
  if (first != std::string_view::npos && (text[first] == '{' || text[first] == '[')) {
    rules = ParseJsonRules(text);
  } else {
    rules = RuleLineParser(text).ParseAll();
  }
  std::set<std::string> ids;
  for (const Rule& rule : rules) {
    if (!ids.insert(rule.id).second) throw DuplicateId("duplicate rule id " + rule.id);
    ValidateRule(rule, registry);
  }
  return rules;
}

std::vector<Rule> LoadRuleFile(const std::string& path, const DeviceRegistry& registry) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open rule file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseRules(buf.str(), registry);
}

std::string SerializeRule(const Rule& rule) {
  std::string out = rule.id + ": when " + SourceText(rule.event_source) + " " +
                    ConstraintText(rule.event_source, rule.event);
  if (rule.sustained_for) out += " for " + FormatDuration(*rule.sustained_for);
  for (size_t i = 0; i < rule.conditions.size(); ++i) {
    const Condition& c = rule.conditions[i];
    out += i == 0 ? " if " : " and ";
    out += SourceText(c.source) + " " + ConstraintText(c.source, c.constraint);
  }
  if (rule.time_window) out += " between " + rule.time_window->ToString();
  out += " then ";
  for (size_t i = 0; i < rule.actions.size(); ++i) {
    const Command& c = rule.actions[i];
    if (i) out += ", ";
    if (c.kind == Command::Kind::kSet) {
      out += "set " + SourceText(c.target) + " " + c.value.ToToken();
    } else {
      std::string escaped;
      for (char ch : c.message) {
        if (ch == '"' || ch == '\\') escaped += '\\';
        escaped += ch;
      }
      out += "notify \"" + escaped + "\"";
    }
  }
  return out;
}

std::string SerializeRules(const std::vector<Rule>& rules) {
  std::string out;
  for (const Rule& r : rules) out += SerializeRule(r) + "\n";
  return out;
}

std::string RulesToJson(const std::vector<Rule>& rules) {
  json list = json::array();
  for (const Rule& rule : rules) {
    json j;
    j["id"] = rule.id;
    j["when"] = ConstraintJson(rule.event_source, rule.event);
    if (rule.sustained_for) j["for"] = *rule.sustained_for;
    if (!rule.conditions.empty()) {
      json conds = json::array();
      for (const Condition& c : rule.conditions) conds.push_back(ConstraintJson(c.source, c.constraint));
      j["if"] = conds;
    }
    if (rule.time_window) j["between"] = rule.time_window->ToString();
    json then = json::array();
    for (const Command& c : rule.actions) {
      if (c.kind == Command::Kind::kNotify) {
        then.push_back({{"notify", c.message}});
      } else {
        then.push_back({{"set", SourceText(c.target)}, {"value", ValueJson(c.value)}});
      }
    }
    j["then"] = then;
    list.push_back(j);
  }
  return json{{"rules", list}}.dump(2);
}

}  // namespace flowguard
