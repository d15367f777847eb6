// Reference automation platform.
//
// Mirrors a cloud hub: it stores reported values, fires an event only when
// a binary or enumerated value changes (numeric readings always fire), runs
// the rules subscribed to the event against its own store, and logs the
// resulting method calls. Messages are processed strictly in arrival order.

#ifndef FLOWGUARD_PLATFORM_H_
#define FLOWGUARD_PLATFORM_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowguard/model.h"
#include "flowguard/registry.h"
#include "flowguard/rule.h"

namespace flowguard {

struct PlatformMessage {
  Source source;
  Value value;
  int64_t arrival = 0;
  // Reading time carried in the payload; duration rules measure from it.
  int64_t observed = 0;
};

struct FiredEvent {
  int64_t t = 0;
  Source source;
  Value value;
};

struct MethodCall {
  int64_t t = 0;
  std::string rule_id;
  Command command;

  // "SL1.switch=on" or "notify(msg)"
  std::string Name() const;
  bool operator==(const MethodCall&) const = default;
};

class Platform {
 public:
  // Time-triggered rules are accepted but never fire: the platform only
  // reacts to device events.
  Platform(const DeviceRegistry& registry, std::vector<Rule> rules);

  // Runs duration checks due before the arrival, then the message. Arrivals
  // must not go backwards. Returns the event fired, if any.
  std::optional<FiredEvent> Ingest(const PlatformMessage& message);
  // Runs duration checks due at or before `t`.
  void AdvanceTo(int64_t t);

  std::optional<Value> Get(const Source& source) const;
  const std::vector<MethodCall>& calls() const { return calls_; }
  const std::vector<FiredEvent>& events() const { return events_; }
  const std::vector<Rule>& rules() const { return rules_; }
  int64_t now() const { return now_; }
  // Earliest pending duration check.
  std::optional<int64_t> NextCheck() const;

 private:
  struct Hold {
    bool holding = false;
    int64_t since = 0;
    uint64_t epoch = 0;
  };
  struct Check {
    int64_t due;
    uint64_t order;
    size_t rule;
    uint64_t epoch;
    bool operator>(const Check& o) const {
      return due != o.due ? due > o.due : order > o.order;
    }
  };

  void RunDue(int64_t t, bool inclusive);
  bool ConditionsHold(const Rule& rule, int64_t at) const;
  void Execute(const Rule& rule, int64_t at);

  const DeviceRegistry& registry_;
  std::vector<Rule> rules_;
  std::map<Source, Value> store_;
  std::vector<Hold> holds_;
  std::vector<Check> checks_;  // min-heap on (due, order)
  uint64_t order_ = 0;
  int64_t now_ = 0;
  std::vector<MethodCall> calls_;
  std::vector<FiredEvent> events_;
};

// State of every device over time, built from a trace of device reports.
class StateHistory {
 public:
  explicit StateHistory(const DeviceRegistry* registry = nullptr) : registry_(registry) {}
  // Items must be added in time order.
  void Add(const DataItem& item);
  // Last value reported at or before `t`, else the registry's initial value.
  std::optional<Value> At(const Source& source, int64_t t) const;
  // Time of the last report at or before `t`, if any.
  std::optional<int64_t> LastChange(const Source& source, int64_t t) const;

 private:
  const DeviceRegistry* registry_;
  std::map<Source, std::vector<std::pair<int64_t, Value>>> series_;
};

// Removes set-commands whose target is already in the commanded state. The
// state is the history, overridden by earlier kept calls issued after the
// history's last report. Notifications are never redundant.
std::vector<MethodCall> DedupCalls(const std::vector<MethodCall>& calls,
                                   const StateHistory& history);

// Matching calls: same command, issued within `tolerance_ms` of each other.
// Returns index pairs of a longest common subsequence under that relation.
std::vector<std::pair<size_t, size_t>> MatchCalls(const std::vector<MethodCall>& a,
                                                  const std::vector<MethodCall>& b,
                                                  int64_t tolerance_ms = 1000);

}  // namespace flowguard

#endif  // FLOWGUARD_PLATFORM_H_
