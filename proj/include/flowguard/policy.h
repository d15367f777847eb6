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

// Data flow policies: a TRIGGER section and a list of CHECK items, each
// carrying run/else actions. See docs/formats.md for the text form.

#ifndef FLOWGUARD_POLICY_H_
#define FLOWGUARD_POLICY_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "flowguard/model.h"
#include "flowguard/registry.h"

namespace flowguard {

inline constexpr int64_t kDefaultDiffKeepDelayMs = 100;

enum class Method {
  kKeep,
  kBlock,
  kDiffKeep,
  kRandomize,
  kPickOther,
  kStartTimer,
  kStopTimer,
  kFireTimer,
  kAddCallback,
};

std::string_view MethodName(Method method);
std::optional<Method> ParseMethod(std::string_view name);
// keep, block, diffKeep, randomize and pickOther transform data; the rest
// drive timers.
bool IsDataMethod(Method method);

struct Callback;

struct Action {
  Method method = Method::kBlock;
  // randomize: open interval (lo, hi).
  double lo = 0;
  double hi = 0;
  // pickOther: CUR (unset means the value being processed) and ENUM.
  std::optional<std::string> current;
  std::vector<std::string> choices;
  // timer methods
  std::string timer_id;
  std::shared_ptr<const Callback> callback;  // addCallback only
  int64_t delay = 0;

  static Action Keep(int64_t delay = 0);
  static Action Block();
  static Action DiffKeep(int64_t delay = 0);
  static Action Randomize(double lo, double hi, int64_t delay = 0);
  static Action PickOther(std::vector<std::string> choices,
                          std::optional<std::string> current = std::nullopt,
                          int64_t delay = 0);
  static Action StartTimer(std::string id);
  static Action StopTimer(std::string id);
  static Action FireTimer(std::string id);
  static Action AddCallback(std::string id, Callback callback);

  // "randomize(86, 150) 0"
  std::string ToString() const;
  // Same method, parameters and delay.
  bool operator==(const Action& other) const;
};

// What a timer does once it has run for `after_ms`: apply `run` (or `else_`
// when the optional DB* branch does not hold) to the datum captured when the
// callback was registered.
struct Callback {
  int64_t after_ms = 0;
  std::optional<Source> fetch1;
  std::optional<Constraint> branch;
  Action run;
  std::optional<Action> else_;

  bool operator==(const Callback& other) const;
};

struct TriggerSection {
  Source pattern;
  Constraint constraint;
  std::optional<Source> fetch1;       // resolved against DB*
  std::optional<Constraint> branch;
  Action run;
  std::optional<Action> else_;

  bool operator==(const TriggerSection&) const = default;
};

struct CheckItem {
  Source fetch;                       // resolved against DB
  Constraint constraint;
  std::optional<Source> fetch1;       // resolved against DB*
  std::optional<Constraint> branch;
  Action run;
  std::optional<Action> else_;

  bool operator==(const CheckItem&) const = default;
};

enum class Origin { kAutomation, kUser };

inline constexpr int kAutomationPriority = 0;
inline constexpr int kUserPriority = 100;

struct Policy {
  std::string id;
  Origin origin = Origin::kAutomation;
  std::string rule_id;  // automation policies: the rule compiled from
  int priority = kAutomationPriority;
  TriggerSection trigger;
  std::vector<CheckItem> check;

  bool operator==(const Policy&) const = default;
};

// One report produced by a data method: the value and its delay.
struct Emission {
  Value value;
  int64_t delay = 0;

  bool operator==(const Emission&) const = default;
};

// Applies a data method to `current`. keep -> [(current, d)]; block -> [];
// diffKeep -> [(other, d), (current, d + diff_keep_delay)];
// randomize(lo, hi) -> [(uniform sample in the open interval, d)];
// pickOther -> [(uniform member of ENUM other than CUR, d)].
// Throws KindMismatch or InvalidPolicy.
std::vector<Emission> ApplyMethod(const Action& action, const Value& current,
                                  const AttributeKind& kind, std::mt19937_64& rng,
                                  int64_t diff_keep_delay = kDefaultDiffKeepDelayMs);

// Checks field coupling, method/kind compatibility and source existence.
// Throws InvalidPolicy.
void ValidatePolicy(const Policy& policy, const DeviceRegistry& registry);

std::string SerializePolicy(const Policy& policy);
std::string SerializePolicies(const std::vector<Policy>& policies);
// Throws ParseError.
Policy ParsePolicy(std::string_view text);
std::vector<Policy> ParsePolicies(std::string_view text);
std::vector<Policy> LoadPolicyFile(const std::string& path);

}  // namespace flowguard

#endif  // FLOWGUARD_POLICY_H_
