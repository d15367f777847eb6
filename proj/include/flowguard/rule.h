// Event-condition-action automation rules and their two file forms.
//
// Line form, one rule per line:
//   UEW: when MU1.contact == open if SP1.presence == present
//        between 08:00-18:00 then set SL1.switch on, notify "door"
// JSON form: see docs/formats.md.

#ifndef FLOWGUARD_RULE_H_
#define FLOWGUARD_RULE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowguard/model.h"
#include "flowguard/registry.h"

namespace flowguard {

struct Command {
  enum class Kind { kSet, kNotify };

  Kind kind = Kind::kSet;
  Source target;        // kSet
  Value value;          // kSet
  std::string message;  // kNotify

  static Command Set(Source target, Value value);
  static Command Notify(std::string message);

  bool operator==(const Command&) const = default;
};

struct Condition {
  Source source;
  Constraint constraint;

  bool operator==(const Condition&) const = default;
};

struct Rule {
  std::string id;
  Source event_source;
  Constraint event;
  std::vector<Condition> conditions;  // conjunctive
  std::optional<int64_t> sustained_for;  // ms
  std::optional<TimeWindow> time_window;
  std::vector<Command> actions;

  // Device sources whose state the rule commands.
  std::vector<Source> Targets() const;

  bool operator==(const Rule&) const = default;
};

// Checks the rule is closed over the registry and values fit their kinds.
// Throws UnknownSource or KindMismatch.
void ValidateRule(const Rule& rule, const DeviceRegistry& registry);

// Accepts the line form or the JSON form (first non-blank character '{' or
// '['). Every rule is validated. Throws ParseError, UnknownSource,
// KindMismatch or DuplicateId.
std::vector<Rule> ParseRules(std::string_view text, const DeviceRegistry& registry);
std::vector<Rule> LoadRuleFile(const std::string& path, const DeviceRegistry& registry);

std::string SerializeRule(const Rule& rule);
std::string SerializeRules(const std::vector<Rule>& rules);
std::string RulesToJson(const std::vector<Rule>& rules);

// "5m", "300s", "1h", "250ms".
int64_t ParseDuration(std::string_view text);
std::string FormatDuration(int64_t ms);

}  // namespace flowguard

#endif  // FLOWGUARD_RULE_H_
