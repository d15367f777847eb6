#include "support.h"

#include <algorithm>
#include <map>
#include <set>

#include "flowguard/error.h"

namespace flowguard::testing {

namespace {

constexpr char kSmallRegistry[] = R"({"devices": [
  {"id": "D1", "type": "door", "attributes": [
    {"name": "contact", "kind": "binary", "values": ["open", "closed"]},
    {"name": "temperature", "kind": "numeric", "unit": "F", "min": 0, "max": 10}]},
  {"id": "M1", "type": "motion", "attributes": [
    {"name": "motion", "kind": "binary", "values": ["active", "inactive"]},
    {"name": "illuminance", "kind": "numeric", "unit": "lux", "min": 0, "max": 8}]},
  {"id": "L1", "type": "switch", "attributes": [
    {"name": "switch", "kind": "binary", "values": ["on", "off"], "commandable": true}]},
  {"id": "H1", "type": "hub", "attributes": [
    {"name": "mode", "kind": "enumerated", "values": ["home", "away", "night"]}]}
]})";

int Pick(std::mt19937_64& rng, int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }
bool Coin(std::mt19937_64& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

bool SafeSatisfy(const Value& v, const Constraint& c) {
  try {
    return Satisfy(v, c);
  } catch (const TypeMismatch&) {
    return false;
  }
}

std::vector<Source> DeviceSources(const DeviceRegistry& registry) {
  std::vector<Source> out;
  for (const Source& s : registry.Sources()) {
    if (s.type == SourceType::kDevice) out.push_back(s);
  }
  return out;
}

Action RandomDataAction(const AttributeKind& kind, std::mt19937_64& rng, int64_t delay) {
  std::vector<int> options = {0, 1};  // keep, block
  if (kind.kind == ValueKind::kBinary) options.push_back(2);
  if (kind.kind == ValueKind::kNumeric) options.push_back(3);
  if (kind.IsLabelKind()) options.push_back(4);
  switch (options[Pick(rng, static_cast<int>(options.size()))]) {
    case 0: return Action::Keep(delay);
    case 1: return Action::Block();
    case 2: return Action::DiffKeep(delay);
    case 3: {
      int lo = static_cast<int>(kind.min);
      int span = static_cast<int>(kind.max - kind.min);
      int a = lo + Pick(rng, span);
      int b = a + 1 + Pick(rng, static_cast<int>(kind.max) - a);
      return Action::Randomize(a, b, delay);
    }
    default:
      return Action::PickOther(kind.labels, std::nullopt, delay);
  }
}

}  // namespace

std::string DataPath(const std::string& name) {
  return std::string(FLOWGUARD_DATA_DIR) + "/" + name;
}

const DeviceRegistry& SmallRegistry() {
  static const DeviceRegistry registry = DeviceRegistry::FromJson(kSmallRegistry);
  return registry;
}

const DeviceRegistry& TestbedRegistry() {
  static const DeviceRegistry registry =
      DeviceRegistry::LoadFile(DataPath("testbed.registry.json"));
  return registry;
}

Value RandomValue(const AttributeKind& kind, std::mt19937_64& rng) {
  if (kind.kind == ValueKind::kNumeric) {
    int steps = static_cast<int>((kind.max - kind.min) * 2);
    return Value(kind.min + 0.5 * Pick(rng, steps + 1));
  }
  return Value(kind.labels[Pick(rng, static_cast<int>(kind.labels.size()))]);
}

TimeWindow RandomWindow(std::mt19937_64& rng) {
  int start = Pick(rng, kMinutesPerDay);
  int end = start;
  while (end == start) end = Pick(rng, kMinutesPerDay);
  return {start, end};
}

Constraint RandomConstraint(const AttributeKind& kind, std::mt19937_64& rng) {
  if (kind.kind == ValueKind::kNumeric) {
    static const Op kOps[] = {Op::kEq, Op::kNe, Op::kLt, Op::kLe, Op::kGt, Op::kGe};
    int lo = static_cast<int>(kind.min);
    int hi = static_cast<int>(kind.max);
    return Constraint::Compare(kOps[Pick(rng, 6)], Value(lo + Pick(rng, hi - lo + 1)));
  }
  const auto& labels = kind.labels;
  switch (Pick(rng, 3)) {
    case 0: return Constraint::Compare(Op::kEq, Value(labels[Pick(rng, int(labels.size()))]));
    case 1: return Constraint::Compare(Op::kNe, Value(labels[Pick(rng, int(labels.size()))]));
    default: {
      std::vector<Value> set;
      for (const std::string& l : labels) {
        if (Coin(rng)) set.emplace_back(l);
      }
      if (set.empty()) set.emplace_back(labels.front());
      return Constraint::InSet(set, Coin(rng, 0.3));
    }
  }
}

Policy RandomPolicy(const DeviceRegistry& registry, std::mt19937_64& rng, const std::string& id,
                    Origin origin, const PolicyShape& shape) {
  std::vector<Source> sources = DeviceSources(registry);
  while (true) {
    Policy p;
    p.id = id;
    p.origin = origin;
    p.priority = origin == Origin::kUser ? kUserPriority : kAutomationPriority;
    TriggerSection& t = p.trigger;
    t.pattern = sources[Pick(rng, int(sources.size()))];
    const AttributeKind& kind = registry.Kind(t.pattern);
    t.constraint = RandomConstraint(kind, rng);
    auto delay = [&] { return shape.delays && Coin(rng, 0.2) ? 100 * (1 + Pick(rng, 5)) : 0; };
    t.run = RandomDataAction(kind, rng, delay());
    if (Coin(rng, 0.6)) {
      t.fetch1 = Coin(rng, 0.7) ? t.pattern : sources[Pick(rng, int(sources.size()))];
      t.branch = RandomConstraint(registry.Kind(*t.fetch1), rng);
      if (Coin(rng, 0.7)) t.else_ = RandomDataAction(kind, rng, delay());
    }
    int n = Pick(rng, shape.max_checks + 1);
    for (int i = 0; i < n; ++i) {
      CheckItem c;
      if (shape.time_checks && Coin(rng, 0.2)) {
        c.fetch = Source::TimeOfDay();
        c.constraint = Constraint::Within(RandomWindow(rng));
        c.run = Action::Block();
      } else {
        c.fetch = sources[Pick(rng, int(sources.size()))];
        const AttributeKind& ck = registry.Kind(c.fetch);
        c.constraint = RandomConstraint(ck, rng);
        c.run = RandomDataAction(ck, rng, 0);
        if (Coin(rng, 0.6)) {
          c.fetch1 = c.fetch;
          c.branch = RandomConstraint(ck, rng);
          if (Coin(rng, 0.7)) c.else_ = RandomDataAction(ck, rng, 0);
        }
      }
      p.check.push_back(std::move(c));
    }
    try {
      ValidatePolicy(p, registry);
      return p;
    } catch (const InvalidPolicy&) {
    }
  }
}

// ---------------------------------------------------------------------------

ReferenceEvaluator::ReferenceEvaluator(const DeviceRegistry& registry, std::vector<Policy> ups,
                       std::vector<Policy> aps, int64_t diff_keep_delay, uint64_t seed)
    : registry_(registry),
      ups_(std::move(ups)),
      aps_(std::move(aps)),
      delay_(diff_keep_delay),
      rng_(seed) {}

std::optional<Value> ReferenceEvaluator::Lookup(const Source& s, int64_t at) const {
  if (s.type == SourceType::kTime) return Value(static_cast<int>((at / 60000) % 1440));
  auto it = db_.find(s);
  if (it != db_.end()) return it->second.first;
  return registry_.InitialValue(s);
}

std::optional<Value> ReferenceEvaluator::LookupStar(const Source& s, int64_t at) const {
  if (s.type != SourceType::kDevice) return Lookup(s, at);
  auto it = db_star_.find(s);
  if (it == db_star_.end()) return std::nullopt;
  return it->second;
}

const Action* ReferenceEvaluator::Choose(const std::optional<Source>& fetch1,
                                 const std::optional<Constraint>& branch, const Action& run,
                                 const std::optional<Action>& else_, int64_t at) const {
  if (!fetch1) return &run;
  std::optional<Value> star = LookupStar(*fetch1, at);
  if (star && SafeSatisfy(*star, *branch)) return &run;
  return else_ ? &*else_ : nullptr;
}

void ReferenceEvaluator::Apply(const Action& action, const Source& source, const Value& value,
                       int64_t observed, int64_t at, int klass, bool user,
                       const std::string& policy_id, std::vector<Pending>* out, int* seq) {
  auto push = [&](const Value& v, int64_t delay, bool fake) {
    ReportEnvelope env;
    env.source = source;
    env.value = v;
    env.emit_at = at + delay;
    env.observed_at = fake ? env.emit_at : observed;
    env.policy_id = policy_id;
    out->push_back({env, klass, (*seq)++, action, user});
  };
  const AttributeKind& kind = registry_.Kind(source);
  switch (action.method) {
    case Method::kBlock:
      return;
    case Method::kKeep:
      push(value, action.delay, false);
      return;
    case Method::kDiffKeep: {
      const std::string& other =
          value.label() == kind.labels[0] ? kind.labels[1] : kind.labels[0];
      push(Value(other), action.delay, true);
      push(value, action.delay + delay_, false);
      return;
    }
    default:
      for (const Emission& e : ApplyMethod(action, value, kind, rng_, delay_)) {
        push(e.value, e.delay, false);
      }
  }
}

bool ReferenceEvaluator::Blocked(const ReportEnvelope& env) const {
  for (const Policy& up : ups_) {
    if (!(up.trigger.pattern == env.source)) continue;
    std::optional<Value> probe = Lookup(env.source, env.emit_at);
    if (!SafeSatisfy(probe ? *probe : env.value, up.trigger.constraint)) continue;
    bool all = true;
    for (const CheckItem& c : up.check) {
      std::optional<Value> v = Lookup(c.fetch, env.emit_at);
      if (!v || !SafeSatisfy(*v, c.constraint)) {
        all = false;
        break;
      }
    }
    if (!all) continue;
    const Action* a = Choose(up.trigger.fetch1, up.trigger.branch, up.trigger.run,
                             up.trigger.else_, env.emit_at);
    if (!a || a->method == Method::kBlock) return true;
  }
  return false;
}

std::vector<ReportEnvelope> ReferenceEvaluator::OnEvent(const DataItem& item) {
  const int64_t now = item.timestamp;
  db_[item.source] = {item.value, item.timestamp};
  std::vector<Pending> pending;
  int seq = 0;
  auto run_policy = [&](const Policy& p) {
    const TriggerSection& t = p.trigger;
    if (!(t.pattern == item.source) || !SafeSatisfy(item.value, t.constraint)) return;
    std::vector<std::pair<Value, int64_t>> data;
    for (const CheckItem& c : p.check) {
      std::optional<Value> v = Lookup(c.fetch, now);
      if (!v || !SafeSatisfy(*v, c.constraint)) return;  // Alg. 1 returns here
      int64_t observed = now;
      if (c.fetch.type == SourceType::kDevice && db_.count(c.fetch)) {
        observed = db_.at(c.fetch).second;
      }
      data.emplace_back(*v, observed);
    }
    bool user = p.origin == Origin::kUser;
    if (const Action* a = Choose(t.fetch1, t.branch, t.run, t.else_, now)) {
      if (IsDataMethod(a->method)) {
        Apply(*a, item.source, item.value, item.timestamp, now, 1, user, p.id, &pending, &seq);
      }
    }
    for (size_t i = 0; i < p.check.size(); ++i) {
      const CheckItem& c = p.check[i];
      if (const Action* a = Choose(c.fetch1, c.branch, c.run, c.else_, now)) {
        if (IsDataMethod(a->method)) {
          Apply(*a, c.fetch, data[i].first, data[i].second, now, 0, user, p.id, &pending, &seq);
        }
      }
    }
  };
  for (const Policy& p : ups_) run_policy(p);
  for (const Policy& p : aps_) run_policy(p);

  std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
    if (a.env.emit_at != b.env.emit_at) return a.env.emit_at < b.env.emit_at;
    if (a.klass != b.klass) return a.klass < b.klass;
    return a.seq < b.seq;
  });
  std::vector<Pending> kept;
  for (const Pending& p : pending) {
    bool dup = false;
    for (const Pending& k : kept) {
      if (k.env.source == p.env.source && k.env.emit_at == p.env.emit_at &&
          (k.env.value == p.env.value || k.action == p.action)) {
        dup = true;
      }
    }
    if (!dup) kept.push_back(p);
  }
  std::vector<ReportEnvelope> out;
  for (const Pending& p : kept) {
    if (!p.user && Blocked(p.env)) continue;
    db_star_[p.env.source] = p.env.value;
    out.push_back(p.env);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<int64_t> ExpectedTimerFires(const std::vector<std::pair<int64_t, bool>>& events,
                                        int64_t duration, int64_t horizon) {
  std::vector<int64_t> fires;
  for (size_t i = 0; i < events.size(); ++i) {
    if (!events[i].second) continue;
    int64_t due = events[i].first + duration;
    bool cancelled = i + 1 < events.size() && events[i + 1].first <= due;
    if (!cancelled && due <= horizon) fires.push_back(due);
  }
  return fires;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Value> Grid(const Source& s, const DeviceRegistry& registry) {
  std::vector<Value> out;
  if (s.type == SourceType::kTime) {
    for (int m = 0; m < kMinutesPerDay; ++m) out.emplace_back(m);
    return out;
  }
  // Elapsed milliseconds. Rule durations are whole seconds of at most an
  // hour, so half-second steps up to two hours cover both sides of each.
  if (s.type == SourceType::kTimer) {
    for (int64_t ms = 0; ms <= 2 * 3600000; ms += 500) out.emplace_back(static_cast<double>(ms));
    return out;
  }
  const AttributeKind& kind = registry.Kind(s);
  if (kind.kind == ValueKind::kNumeric) {
    for (double x = kind.min; x <= kind.max; x += 0.5) out.emplace_back(x);
  } else {
    for (const std::string& l : kind.labels) out.emplace_back(l);
  }
  return out;
}

using Atoms = std::vector<std::pair<Source, Constraint>>;

Atoms CheckAtoms(const Policy& a, const Policy& b) {
  Atoms atoms;
  for (const Policy* p : {&a, &b}) {
    for (const CheckItem& c : p->check) atoms.emplace_back(c.fetch, c.constraint);
  }
  return atoms;
}

bool TriggersMeet(const Policy& up, const Policy& ap, const DeviceRegistry& registry) {
  if (!(up.trigger.pattern == ap.trigger.pattern)) return false;
  for (const Value& v : Grid(up.trigger.pattern, registry)) {
    if (SafeSatisfy(v, up.trigger.constraint) && SafeSatisfy(v, ap.trigger.constraint)) {
      return true;
    }
  }
  return false;
}

bool EffectsDiffer(const Policy& up, const Policy& ap) {
  auto effects = [](const Policy& p) {
    std::vector<std::pair<Source, Action>> out;
    auto add = [&](const Source& s, const Action& a) {
      if (a.method == Method::kKeep || a.method == Method::kBlock ||
          a.method == Method::kDiffKeep || a.method == Method::kRandomize ||
          a.method == Method::kPickOther) {
        out.emplace_back(s, a);
      }
    };
    add(p.trigger.pattern, p.trigger.run);
    if (p.trigger.else_) add(p.trigger.pattern, *p.trigger.else_);
    for (const CheckItem& c : p.check) {
      add(c.fetch, c.run);
      if (c.else_) add(c.fetch, *c.else_);
    }
    return out;
  };
  for (const auto& [o1, a1] : effects(up)) {
    for (const auto& [o2, a2] : effects(ap)) {
      bool same = a1.method == a2.method && a1.delay == a2.delay && a1.lo == a2.lo &&
                  a1.hi == a2.hi && a1.current == a2.current && a1.choices == a2.choices;
      if (o1 == o2 && !same) return true;
    }
  }
  return false;
}

bool Search(const Atoms& atoms, const std::vector<Source>& axes,
            const std::vector<std::vector<Value>>& grids, size_t depth,
            std::map<Source, Value>* ctx) {
  if (depth == axes.size()) {
    for (const auto& [s, c] : atoms) {
      if (!SafeSatisfy(ctx->at(s), c)) return false;
    }
    return true;
  }
  for (const Value& v : grids[depth]) {
    (*ctx)[axes[depth]] = v;
    // Prune on atoms whose source is already assigned.
    bool ok = true;
    for (const auto& [s, c] : atoms) {
      if (s == axes[depth] && !SafeSatisfy(v, c)) {
        ok = false;
        break;
      }
    }
    if (ok && Search(atoms, axes, grids, depth + 1, ctx)) return true;
  }
  return false;
}

}  // namespace

bool GridConflict(const Policy& up, const Policy& ap, const DeviceRegistry& registry) {
  if (up.id == ap.id) return false;
  if (!TriggersMeet(up, ap, registry)) return false;
  if (!EffectsDiffer(up, ap)) return false;
  Atoms atoms = CheckAtoms(up, ap);
  std::vector<Source> axes;
  for (const auto& [s, c] : atoms) {
    if (std::find(axes.begin(), axes.end(), s) == axes.end()) axes.push_back(s);
  }
  std::vector<std::vector<Value>> grids;
  for (const Source& s : axes) grids.push_back(Grid(s, registry));
  std::map<Source, Value> ctx;
  return Search(atoms, axes, grids, 0, &ctx);
}

bool PerSourceGridConflict(const Policy& up, const Policy& ap, const DeviceRegistry& registry) {
  if (up.id == ap.id) return false;
  if (!TriggersMeet(up, ap, registry)) return false;
  if (!EffectsDiffer(up, ap)) return false;
  Atoms atoms = CheckAtoms(up, ap);
  std::set<Source> axes;
  for (const auto& [s, c] : atoms) axes.insert(s);
  for (const Source& s : axes) {
    bool found = false;
    for (const Value& v : Grid(s, registry)) {
      bool all = true;
      for (const auto& [a, c] : atoms) {
        if (a == s && !SafeSatisfy(v, c)) {
          all = false;
          break;
        }
      }
      if (all) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace flowguard::testing
