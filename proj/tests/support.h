// Fixtures, random generators and reference oracles shared by the unit
// tests and the acceptance binary. The oracles are written from the policy
// semantics directly and share no code with the engine, the solver or the
// timer machinery.

#ifndef FLOWGUARD_TESTS_SUPPORT_H_
#define FLOWGUARD_TESTS_SUPPORT_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowguard/engine.h"
#include "flowguard/model.h"
#include "flowguard/policy.h"
#include "flowguard/registry.h"

namespace flowguard::testing {

std::string DataPath(const std::string& name);

// Door (contact, temperature 0..10), motion (motion, illuminance 0..8),
// switch (commandable) and a hub mode with three values.
const DeviceRegistry& SmallRegistry();
const DeviceRegistry& TestbedRegistry();

// Random well-formed policies over the device sources of `registry`.
// Numeric thresholds are integers, time windows whole minutes.
struct PolicyShape {
  int max_checks = 3;
  bool time_checks = true;
  bool delays = true;
};
Constraint RandomConstraint(const AttributeKind& kind, std::mt19937_64& rng);
TimeWindow RandomWindow(std::mt19937_64& rng);
Policy RandomPolicy(const DeviceRegistry& registry, std::mt19937_64& rng, const std::string& id,
                    Origin origin, const PolicyShape& shape = {});
Value RandomValue(const AttributeKind& kind, std::mt19937_64& rng);

// Straight-line reference evaluator: one event at a time, one policy at a time, no
// queue. Reports of one event are assumed to be out before the next event.
// Randomizing methods draw through ApplyMethod with an identically seeded
// generator so both sides see the same samples.
class ReferenceEvaluator {
 public:
  ReferenceEvaluator(const DeviceRegistry& registry, std::vector<Policy> ups, std::vector<Policy> aps,
             int64_t diff_keep_delay, uint64_t seed);

  std::vector<ReportEnvelope> OnEvent(const DataItem& item);

 private:
  struct Pending {
    ReportEnvelope env;
    int klass;
    int seq;
    Action action;
    bool user;
  };

  std::optional<Value> Lookup(const Source& s, int64_t at) const;
  std::optional<Value> LookupStar(const Source& s, int64_t at) const;
  const Action* Choose(const std::optional<Source>& fetch1, const std::optional<Constraint>& branch,
                       const Action& run, const std::optional<Action>& else_, int64_t at) const;
  void Apply(const Action& action, const Source& source, const Value& value, int64_t observed,
             int64_t at, int klass, bool user, const std::string& policy_id,
             std::vector<Pending>* out, int* seq);
  bool Blocked(const ReportEnvelope& env) const;

  const DeviceRegistry& registry_;
  std::vector<Policy> ups_;
  std::vector<Policy> aps_;
  int64_t delay_;
  std::mt19937_64 rng_;
  std::map<Source, std::pair<Value, int64_t>> db_;  // value, observed
  std::map<Source, Value> db_star_;
};

// Timer state machine for a single "x for D" rule: a start at every x,
// cancelled by any later event at or before start + D.
std::vector<int64_t> ExpectedTimerFires(const std::vector<std::pair<int64_t, bool>>& events,
                                        int64_t duration, int64_t horizon);

// Brute-force conflict decision on a discretized grid: numeric axes at
// half-integer steps, labels exhaustive, time as 1440 minutes, timers in
// half-second steps up to two hours.
bool GridConflict(const Policy& up, const Policy& ap, const DeviceRegistry& registry);
// Same question, enumerating each source on its own. Valid because every
// atom names a single source.
bool PerSourceGridConflict(const Policy& up, const Policy& ap, const DeviceRegistry& registry);

}  // namespace flowguard::testing

#endif  // FLOWGUARD_TESTS_SUPPORT_H_
