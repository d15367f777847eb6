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

// Rule to automation policy compilation.
//
// CompileRule and CompileTimerRule derive the policies of one rule in
// isolation. CompileRuleSet compiles a whole rule set and adds the checks
// needed when several rules observe the same source: every report that
// reaches the platform can trigger other rules, so each policy carries
// variants that keep those rules' conditions on the platform consistent
// with the real device state. See docs/compiler.md.

#ifndef FLOWGUARD_COMPILER_H_
#define FLOWGUARD_COMPILER_H_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowguard/policy.h"
#include "flowguard/registry.h"
#include "flowguard/rule.h"

namespace flowguard {

// Interval whose random members satisfy `c`: (MIN, k) for < and <=, (k, MAX)
// for > and >=. Nothing for other operators or when the threshold lies
// outside the bounds. Bounds come from StandardBounds, else from the kind.
std::optional<std::pair<double, double>> RandomizeInterval(const Source& source,
                                                           const Constraint& c,
                                                           const AttributeKind& kind);

// One policy for a plain rule; the timer bundle for a sustained rule.
// Throws Unsupported for rules triggered by time.
std::vector<Policy> CompileRule(const Rule& rule, const DeviceRegistry& registry);

// Start and stop policies; the start policy registers one callback that
// reports the sustaining value with keep once the timer reaches the
// duration. Throws Unsupported unless the event selects one value of a
// binary attribute.
std::vector<Policy> CompileTimerRule(const Rule& rule, const DeviceRegistry& registry);

struct CompileOptions {
  // Upper bound on variants per policy. Past it the policy is emitted
  // without cross-rule checks and a note is recorded.
  size_t max_variants = 64;
};

struct CompiledRuleSet {
  std::vector<Policy> policies;
  // Situations the compiler could not fully cover, one line each.
  std::vector<std::string> notes;
};

CompiledRuleSet CompileRuleSet(const std::vector<Rule>& rules, const DeviceRegistry& registry,
                               const CompileOptions& options = {});

}  // namespace flowguard

#endif  // FLOWGUARD_COMPILER_H_
