// Conflict detection between a user policy and automation policies.
//
// Two policies conflict when one event triggers both, their CHECK sections
// can hold in one shared context, and they treat the same data object with
// different effects (method, parameters or delay). Timer methods are not
// data effects and are ignored.

#ifndef FLOWGUARD_CONFLICT_H_
#define FLOWGUARD_CONFLICT_H_

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowguard/model.h"
#include "flowguard/policy.h"
#include "flowguard/registry.h"

namespace flowguard {

// Conjunction of atoms. Atoms on the same source are merged before solving.
struct ConstraintFormula {
  std::vector<std::pair<Source, Constraint>> atoms;
};

using Context = std::map<Source, Value>;

// A context satisfying both formulas, or nothing. Throws TypeMismatch when
// an atom does not fit its source's kind.
std::optional<Context> ConstraintsOverlap(const ConstraintFormula& f1,
                                          const ConstraintFormula& f2,
                                          const DeviceRegistry& registry);

struct ActionPair {
  Source object;
  Action user;
  Action automation;
};

struct ConflictReport {
  std::string up_id;
  std::string ap_id;
  std::string rule_id;  // the automation rule affected
  Source trigger;
  Value trigger_value;  // an event that triggers both policies
  Context checks;       // a state in which both CHECK sections hold
  std::vector<ActionPair> differing;
};

std::vector<ConflictReport> DetectConflicts(const Policy& up, const std::vector<Policy>& aps,
                                            const DeviceRegistry& registry);

std::string FormatConflicts(const std::vector<ConflictReport>& reports);
std::string ConflictsToJson(const std::vector<ConflictReport>& reports);

}  // namespace flowguard

#endif  // FLOWGUARD_CONFLICT_H_
