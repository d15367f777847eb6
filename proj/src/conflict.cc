#include "flowguard/conflict.h"

#include <sstream>

#include <json.hpp>

#include "flowguard/domain.h"
#include "flowguard/error.h"

namespace flowguard {

std::optional<Context> ConstraintsOverlap(const ConstraintFormula& f1,
                                          const ConstraintFormula& f2,
                                          const DeviceRegistry& registry) {
  std::map<Source, Domain> domains;
  auto add = [&](const ConstraintFormula& f) {
    for (const auto& [source, constraint] : f.atoms) {
      auto it = domains.find(source);
      if (it == domains.end()) it = domains.emplace(source, Domain(registry.Kind(source))).first;
      it->second.Restrict(constraint);
    }
  };
  add(f1);
  add(f2);
  Context witness;
  for (const auto& [source, domain] : domains) {
    std::optional<Value> v = domain.Witness();
    if (!v) return std::nullopt;
    witness[source] = *v;
  }
  return witness;
}

namespace {

struct Effect {
  Source object;
  Action action;
};

std::vector<Effect> Effects(const Policy& p) {
  std::vector<Effect> out;
  auto add = [&](const Source& object, const Action& a) {
    if (IsDataMethod(a.method)) out.push_back({object, a});
  };
  add(p.trigger.pattern, p.trigger.run);
  if (p.trigger.else_) add(p.trigger.pattern, *p.trigger.else_);
  for (const CheckItem& c : p.check) {
    add(c.fetch, c.run);
    if (c.else_) add(c.fetch, *c.else_);
  }
  return out;
}

ConstraintFormula Checks(const Policy& p) {
  ConstraintFormula f;
  for (const CheckItem& c : p.check) f.atoms.emplace_back(c.fetch, c.constraint);
  return f;
}

}  // namespace

std::vector<ConflictReport> DetectConflicts(const Policy& up, const std::vector<Policy>& aps,
                                            const DeviceRegistry& registry) {
  std::vector<ConflictReport> out;
  std::vector<Effect> up_effects = Effects(up);
  ConstraintFormula up_checks = Checks(up);
  for (const Policy& ap : aps) {
    if (ap.id == up.id) continue;
    if (!(ap.trigger.pattern == up.trigger.pattern)) continue;
    std::optional<Context> trig =
        ConstraintsOverlap({{{up.trigger.pattern, up.trigger.constraint}}},
                           {{{ap.trigger.pattern, ap.trigger.constraint}}}, registry);
    if (!trig) continue;
    std::optional<Context> checks = ConstraintsOverlap(up_checks, Checks(ap), registry);
    if (!checks) continue;
    std::vector<ActionPair> differing;
    for (const Effect& e2 : Effects(ap)) {
      for (const Effect& e1 : up_effects) {
        if (e1.object == e2.object && !(e1.action == e2.action)) {
          differing.push_back({e1.object, e1.action, e2.action});
        }
      }
    }
    if (differing.empty()) continue;
    ConflictReport r;
    r.up_id = up.id;
    r.ap_id = ap.id;
    r.rule_id = ap.rule_id;
    r.trigger = up.trigger.pattern;
    r.trigger_value = trig->at(up.trigger.pattern);
    r.checks = std::move(*checks);
    r.differing = std::move(differing);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::string Assignment(const Source& s, const Value& v) {
  switch (s.type) {
    case SourceType::kTime: return "time=" + FormatClock(static_cast<int>(v.number()));
    case SourceType::kTimer: return "timer " + s.attribute + "=" + v.ToString() + "ms";
    case SourceType::kDevice: break;
  }
  return s.subject + "." + s.attribute + "=" + v.ToString();
}

}  // namespace

std::string FormatConflicts(const std::vector<ConflictReport>& reports) {
  std::ostringstream os;
  if (reports.empty()) {
    os << "no conflicts\n";
    return os.str();
  }
  for (const ConflictReport& r : reports) {
    os << r.up_id << " conflicts with " << r.ap_id;
    if (!r.rule_id.empty()) os << " (rule " << r.rule_id << ")";
    os << "\n  event: " << Assignment(r.trigger, r.trigger_value) << "\n";
    if (!r.checks.empty()) {
      os << "  state:";
      for (const auto& [s, v] : r.checks) os << " " << Assignment(s, v);
      os << "\n";
    }
    for (const ActionPair& p : r.differing) {
      os << "  " << p.object.ToString() << ": " << p.user.ToString() << " vs "
         << p.automation.ToString() << "\n";
    }
  }
  return os.str();
}

std::string ConflictsToJson(const std::vector<ConflictReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ConflictReport& r : reports) {
    nlohmann::json j;
    j["up"] = r.up_id;
    j["ap"] = r.ap_id;
    j["rule"] = r.rule_id;
    j["event"] = {{"source", r.trigger.ToString()}, {"value", r.trigger_value.ToString()}};
    nlohmann::json state = nlohmann::json::object();
    for (const auto& [s, v] : r.checks) state[s.ToString()] = v.ToString();
    j["state"] = state;
    nlohmann::json diffs = nlohmann::json::array();
    for (const ActionPair& p : r.differing) {
      diffs.push_back({{"object", p.object.ToString()},
                       {"up", p.user.ToString()},
                       {"ap", p.automation.ToString()}});
    }
    j["actions"] = diffs;
    arr.push_back(j);
  }
  return arr.dump(2);
}

}  // namespace flowguard
