#include "flowguard/compiler.h"

#include <algorithm>
#include <map>
#include <set>

#include "flowguard/domain.h"
#include "flowguard/error.h"

namespace flowguard {

std::optional<std::pair<double, double>> RandomizeInterval(const Source& source,
                                                           const Constraint& c,
                                                           const AttributeKind& kind) {
  if (kind.kind != ValueKind::kNumeric || !c.value.is_number()) return std::nullopt;
  double min = kind.min;
  double max = kind.max;
  if (auto bounds = StandardBounds(source.attribute)) {
    min = std::max(min, bounds->first);
    max = std::min(max, bounds->second);
  }
  double k = c.value.number();
  switch (c.op) {
    case Op::kLt:
    case Op::kLe:
      if (min < k && k <= max) return std::make_pair(min, k);
      return std::nullopt;
    case Op::kGt:
    case Op::kGe:
      if (min <= k && k < max) return std::make_pair(k, max);
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

namespace {

// Report that satisfies `c` when the platform's copy does not.
Action ReportInto(const Source& source, const Constraint& c, const AttributeKind& kind) {
  if (auto interval = RandomizeInterval(source, c, kind)) {
    return Action::Randomize(interval->first, interval->second);
  }
  return Action::Keep();
}

CheckItem Refresh(const Source& source, const Constraint& c, const AttributeKind& kind) {
  CheckItem item;
  item.fetch = source;
  item.constraint = c;
  item.fetch1 = source;
  item.branch = c;
  item.run = Action::Block();
  item.else_ = ReportInto(source, c, kind);
  return item;
}

CheckItem Pure(const Source& source, const Constraint& c) {
  CheckItem item;
  item.fetch = source;
  item.constraint = c;
  item.run = Action::Block();
  return item;
}

CheckItem TimeIn(const TimeWindow& w) {
  return Pure(Source::TimeOfDay(), Constraint::Within(w));
}

CheckItem TimeOut(const TimeWindow& w) {
  return Pure(Source::TimeOfDay(), Constraint::Within(w.Complement()));
}

std::optional<Command> SingleTarget(const Rule& rule) {
  if (rule.actions.size() == 1 && rule.actions[0].kind == Command::Kind::kSet) {
    return rule.actions[0];
  }
  return std::nullopt;
}

Constraint Equals(const Value& v) { return Constraint::Compare(Op::kEq, v); }

// The one label an event constraint selects, if it selects exactly one.
std::optional<std::string> SingleLabel(const Constraint& c, const AttributeKind& kind) {
  std::optional<std::string> hit;
  for (const std::string& label : kind.labels) {
    if (!Satisfy(Value(label), c)) continue;
    if (hit) return std::nullopt;
    hit = label;
  }
  return hit;
}

struct Piece {
  CheckItem item;
  bool lie = false;

  bool Reports() const {
    return item.run.method != Method::kBlock ||
           (item.else_ && item.else_->method != Method::kBlock);
  }
};

using Option = std::vector<Piece>;
// Mutually exclusive options covering every context.
using Protection = std::vector<Option>;

Option Append(Option base, const Option& more) {
  base.insert(base.end(), more.begin(), more.end());
  return base;
}

class SetCompiler {
 public:
  SetCompiler(const std::vector<Rule>& rules, const DeviceRegistry& registry,
              const CompileOptions& options)
      : rules_(rules), registry_(registry), options_(options) {
    for (const Rule& r : rules_) {
      if (r.event_source.type != SourceType::kDevice) {
        throw Unsupported("rule " + r.id + ": rules triggered by time are not compiled");
      }
      triggers_.insert(r.event_source);
      for (const Condition& c : r.conditions) conditions_.insert(c.source);
    }
    for (const Source& s : triggers_) {
      if (conditions_.count(s)) mirrored_.insert(s);
    }
  }

  CompiledRuleSet Run() {
    for (const Rule& r : rules_) {
      if (r.sustained_for) {
        Sustained(r);
      } else {
        Plain(r);
      }
    }
    for (const Source& s : mirrored_) Mirror(s);
    MarkPending();
    return std::move(out_);
  }

 private:
  const AttributeKind& KindOf(const Source& s) const { return registry_.Kind(s); }

  bool LieAllowed(const Source& s) const { return !triggers_.count(s); }

  std::optional<CheckItem> Lie(const Source& s, const Constraint& c) const {
    if (!LieAllowed(s)) return std::nullopt;
    const AttributeKind& kind = KindOf(s);
    Constraint negated = c.Negated();
    CheckItem item;
    item.fetch = s;
    item.constraint = c;
    item.fetch1 = s;
    item.branch = negated;
    item.run = Action::Block();
    if (kind.kind == ValueKind::kNumeric) {
      if (c.op == Op::kEq) {
        item.else_ = Action::Randomize(kind.min, kind.max);
      } else if (auto interval = RandomizeInterval(s, negated, kind)) {
        item.else_ = Action::Randomize(interval->first, interval->second);
      } else {
        return std::nullopt;
      }
      return item;
    }
    bool binary = kind.kind == ValueKind::kBinary;
    if (binary || c.op == Op::kEq) {
      item.else_ = Action::PickOther(kind.labels);
      return item;
    }
    return std::nullopt;
  }

  // Rules whose event fires on the platform when `source` changes to `value`.
  std::vector<const Rule*> Triggered(const Source& source, const Value& value,
                                     const Rule* except) const {
    std::vector<const Rule*> out;
    for (const Rule& r : rules_) {
      if (&r == except || r.sustained_for || !(r.event_source == source)) continue;
      if (Satisfy(value, r.event)) out.push_back(&r);
    }
    return out;
  }

  // Keeps the platform's view of `r` equal to the truth, for a report of the
  // real current value of its trigger source. `reported` is the constraint
  // known to hold for that value.
  Protection Truthful(const Rule& r, const Constraint& reported) const {
    const Source& s = r.event_source;
    Protection opts;
    Option prefix;
    if (!Implies(reported, r.event, KindOf(s))) {
      opts.push_back({{Pure(s, r.event.Negated())}});
      prefix.push_back({Pure(s, r.event)});
    }
    if (r.time_window) {
      opts.push_back(Append(prefix, {{TimeOut(*r.time_window)}}));
      prefix.push_back({TimeIn(*r.time_window)});
    }
    if (auto target = SingleTarget(r)) {
      opts.push_back(Append(prefix, {{Pure(target->target, Equals(target->value))}}));
      prefix.push_back({Pure(target->target, Equals(target->value).Negated())});
    }
    for (size_t i = 0; i < r.conditions.size(); ++i) {
      Option opt = prefix;
      for (size_t j = 0; j < i; ++j) {
        opt.push_back({Pure(r.conditions[j].source, r.conditions[j].constraint)});
      }
      const Condition& c = r.conditions[i];
      opt.push_back({Refresh(c.source, c.constraint.Negated(), KindOf(c.source))});
      opts.push_back(std::move(opt));
    }
    Option all = prefix;
    for (const Condition& c : r.conditions) {
      all.push_back({Refresh(c.source, c.constraint, KindOf(c.source))});
    }
    opts.push_back(std::move(all));
    return Simplify(std::move(opts));
  }

  // Keeps `r` from firing on the platform after a report the real device
  // never made.
  Protection Suppress(const Rule& r, const std::string& context) {
    Protection opts;
    Option prefix;
    if (r.time_window) {
      opts.push_back({{TimeOut(*r.time_window)}});
      prefix.push_back({TimeIn(*r.time_window)});
    }
    if (auto target = SingleTarget(r)) {
      opts.push_back(Append(prefix, {{Pure(target->target, Equals(target->value))}}));
      prefix.push_back({Pure(target->target, Equals(target->value).Negated())});
    }
    for (size_t i = 0; i < r.conditions.size(); ++i) {
      Option opt = prefix;
      for (size_t j = 0; j < i; ++j) {
        opt.push_back({Pure(r.conditions[j].source, r.conditions[j].constraint)});
      }
      const Condition& c = r.conditions[i];
      opt.push_back({Refresh(c.source, c.constraint.Negated(), KindOf(c.source))});
      opts.push_back(std::move(opt));
    }
    // Every condition holds: misreport one of them.
    Option all = prefix;
    bool lied = false;
    for (const Condition& c : r.conditions) {
      if (!lied) {
        if (auto lie = Lie(c.source, c.constraint)) {
          all.push_back({*lie, true});
          lied = true;
          continue;
        }
      }
      all.push_back({Pure(c.source, c.constraint)});
    }
    if (!lied) {
      Note(context + ": rule " + r.id +
           " can fire on the platform when all its conditions hold");
    }
    opts.push_back(std::move(all));
    return Simplify(std::move(opts));
  }

  static Protection Simplify(Protection opts) {
    for (const Option& opt : opts) {
      for (const Piece& p : opt) {
        if (p.Reports()) return opts;
      }
    }
    return {Option{}};
  }

  // Drops contradictory variants and reconciles several reports of one
  // source. Returns false when the variant can never apply.
  bool Normalize(Option* variant) const {
    Option unique;
    for (const Piece& p : *variant) {
      bool dup = std::any_of(unique.begin(), unique.end(), [&](const Piece& q) {
        return q.item == p.item && q.lie == p.lie;
      });
      if (!dup) unique.push_back(p);
    }
    std::map<Source, Domain> domains;
    std::map<Source, std::vector<size_t>> reporters;
    for (size_t i = 0; i < unique.size(); ++i) {
      const CheckItem& item = unique[i].item;
      auto it = domains.try_emplace(item.fetch, KindOf(item.fetch)).first;
      it->second.Restrict(item.constraint);
      if (it->second.Empty()) return false;
      if (unique[i].Reports()) reporters[item.fetch].push_back(i);
    }
    for (auto& [source, indices] : reporters) {
      if (indices.size() < 2) continue;
      for (size_t i : indices) {
        if (unique[i].lie) return false;
      }
      for (size_t i : indices) unique[i].item.else_ = Action::Keep();
    }
    *variant = std::move(unique);
    return true;
  }

  // Base checks combined with one option of every protection.
  void Emit(const Policy& shape, const Option& base, const std::vector<Protection>& protections) {
    std::vector<Option> variants = {base};
    bool overflow = false;
    for (const Protection& prot : protections) {
      std::vector<Option> next;
      for (const Option& v : variants) {
        for (const Option& opt : prot) {
          Option combined = Append(v, opt);
          if (Normalize(&combined)) next.push_back(std::move(combined));
        }
      }
      if (next.size() > options_.max_variants) {
        overflow = true;
        break;
      }
      variants = std::move(next);
    }
    if (overflow) {
      Note("policy " + shape.id + ": more than " + std::to_string(options_.max_variants) +
           " variants, emitted without cross-rule checks");
      variants = {base};
    }
    for (size_t k = 0; k < variants.size(); ++k) {
      Policy p = shape;
      if (variants.size() > 1) p.id += ".v" + std::to_string(k + 1);
      for (const Piece& piece : variants[k]) p.check.push_back(piece.item);
      ValidatePolicy(p, registry_);
      out_.policies.push_back(std::move(p));
    }
  }

  Option OwnChecks(const Rule& r) const {
    Option base;
    if (r.time_window) base.push_back({TimeIn(*r.time_window)});
    for (const Condition& c : r.conditions) {
      base.push_back({Refresh(c.source, c.constraint, KindOf(c.source))});
    }
    if (auto target = SingleTarget(r)) {
      base.push_back({Pure(target->target, Equals(target->value).Negated())});
    }
    return base;
  }

  void Plain(const Rule& r) {
    const Source& s = r.event_source;
    const AttributeKind& kind = KindOf(s);
    Policy shape;
    shape.id = "AP-" + r.id;
    shape.rule_id = r.id;
    shape.trigger.pattern = s;
    shape.trigger.constraint = r.event;
    shape.trigger.fetch1 = s;
    shape.trigger.branch = r.event;
    shape.trigger.run =
        kind.kind == ValueKind::kBinary ? Action::DiffKeep() : Action::Keep();
    shape.trigger.else_ = Action::Keep();

    std::vector<Protection> protections;
    for (const Rule& other : rules_) {
      if (&other == &r || other.sustained_for || !(other.event_source == s)) continue;
      if (Overlaps(r.event, other.event, kind)) protections.push_back(Truthful(other, r.event));
    }
    if (kind.kind == ValueKind::kBinary) {
      std::set<std::string> fakes;
      for (const std::string& label : kind.labels) {
        if (Satisfy(Value(label), r.event)) fakes.insert(kind.Other(label));
      }
      std::set<const Rule*> seen;
      for (const std::string& f : fakes) {
        for (const Rule* other : Triggered(s, Value(f), &r)) {
          if (seen.insert(other).second) {
            protections.push_back(Suppress(*other, shape.id + " (value change)"));
          }
        }
      }
    }
    Emit(shape, OwnChecks(r), protections);
  }

  void Sustained(const Rule& r) {
    const Source& s = r.event_source;
    const AttributeKind& kind = KindOf(s);
    std::optional<std::string> label;
    if (kind.kind == ValueKind::kBinary) label = SingleLabel(r.event, kind);
    if (!label) {
      throw Unsupported("rule " + r.id + ": a duration needs an event selecting one value of a "
                        "binary attribute");
    }
    const std::string x = *label;
    const std::string x_bar = kind.Other(x);
    const int64_t duration = *r.sustained_for;
    const std::string timer_id = r.id;
    const Source timer = Source::Timer(timer_id);

    // A rule on the opposite value of the same source makes unconditional
    // resynchronization mirror the whole stream. Those rules resynchronize
    // only while the platform has a check of its own pending, tracked by a
    // second timer restarted by every early report of x (see MarkPending).
    bool gated = false;
    for (const Rule& other : rules_) {
      if (&other == &r || !other.sustained_for || !(other.event_source == s)) continue;
      if (!Satisfy(Value(x), other.event)) gated = true;
    }

    Callback callback;
    callback.after_ms = duration;
    callback.fetch1 = s;
    callback.branch = Equals(Value(x));
    callback.run = gated ? Action::DiffKeep() : Action::Block();
    callback.else_ = Action::Keep();

    Policy start;
    start.id = "AP-" + r.id + "-start";
    start.rule_id = r.id;
    start.trigger.pattern = s;
    start.trigger.constraint = Equals(Value(x));
    start.trigger.run = Action::StartTimer(timer_id);
    CheckItem register_item = Pure(s, Equals(Value(x)));
    register_item.run = Action::AddCallback(timer_id, callback);
    start.check.push_back(register_item);
    ValidatePolicy(start, registry_);
    out_.policies.push_back(start);

    Policy stop;
    stop.id = "AP-" + r.id + "-stop";
    stop.rule_id = r.id;
    stop.trigger.pattern = s;
    stop.trigger.constraint = Equals(Value(x_bar));
    stop.trigger.run = Action::StopTimer(timer_id);
    ValidatePolicy(stop, registry_);
    out_.policies.push_back(stop);

    // Report the change away from x when the platform still holds x.
    Policy sync;
    sync.id = "AP-" + r.id + "-sync";
    sync.rule_id = r.id;
    sync.trigger.pattern = s;
    sync.trigger.constraint = Equals(Value(x_bar));
    sync.trigger.fetch1 = s;
    sync.trigger.branch = Equals(Value(x));
    sync.trigger.run = Action::Keep();
    sync.trigger.else_ = Action::Block();
    Option sync_base;
    if (gated) {
      std::string pending_id = r.id + "-pending";
      pending_.push_back({s, x, pending_id});
      sync_base.push_back({Pure(Source::Timer(pending_id),
                                Constraint::Compare(Op::kLe, Value(double(duration))))});
    }
    std::vector<Protection> sync_protections;
    for (const Rule* other : Triggered(s, Value(x_bar), &r)) {
      sync_protections.push_back(Truthful(*other, Equals(Value(x_bar))));
    }
    Emit(sync, sync_base, sync_protections);

    // Timer due: report x when the rule would run.
    Policy fire;
    fire.id = "AP-" + r.id + "-fire";
    fire.rule_id = r.id;
    fire.trigger.pattern = timer;
    fire.trigger.constraint = Constraint::Compare(Op::kGe, Value(double(duration)));
    fire.trigger.run = Action::FireTimer(timer_id);
    std::vector<Protection> fire_protections;
    for (const Rule* other : Triggered(s, Value(x), &r)) {
      fire_protections.push_back(Suppress(*other, fire.id));
    }
    for (const Rule& other : rules_) {
      if (&other == &r || !other.sustained_for || !(other.event_source == s)) continue;
      if (!Satisfy(Value(x), other.event)) continue;
      if (*other.sustained_for < duration) {
        fire_protections.push_back(Suppress(other, fire.id));
      } else if (*other.sustained_for == duration) {
        fire_protections.push_back(Truthful(other, Equals(Value(x))));
      }
    }
    if (gated) {
      for (const Rule* other : Triggered(s, Value(x_bar), &r)) {
        fire_protections.push_back(Suppress(*other, fire.id + " (value change)"));
      }
    }
    Emit(fire, OwnChecks(r), fire_protections);

    // Timer due but a condition fails: make sure the platform sees it fail.
    for (size_t i = 0; i < r.conditions.size(); ++i) {
      Policy falsify;
      falsify.id = "AP-" + r.id + "-falsify" + std::to_string(i + 1);
      falsify.rule_id = r.id;
      falsify.trigger = fire.trigger;
      falsify.trigger.run = Action::Block();
      for (size_t j = 0; j < i; ++j) {
        falsify.check.push_back(Pure(r.conditions[j].source, r.conditions[j].constraint));
      }
      const Condition& c = r.conditions[i];
      falsify.check.push_back(Refresh(c.source, c.constraint.Negated(), KindOf(c.source)));
      ValidatePolicy(falsify, registry_);
      out_.policies.push_back(std::move(falsify));
    }
  }

  void Mirror(const Source& s) {
    const AttributeKind& kind = KindOf(s);
    std::string base_id = "AP-mirror-" + s.subject + "-" + s.attribute;
    if (kind.kind == ValueKind::kNumeric) {
      Policy shape;
      shape.id = base_id;
      shape.trigger.pattern = s;
      shape.trigger.constraint = Constraint::Compare(Op::kGe, Value(kind.min));
      shape.trigger.run = Action::Keep();
      std::vector<Protection> protections;
      for (const Rule& other : rules_) {
        if (other.sustained_for || !(other.event_source == s)) continue;
        protections.push_back(Truthful(other, shape.trigger.constraint));
      }
      Emit(shape, {}, protections);
      return;
    }
    for (const std::string& label : kind.labels) {
      Policy shape;
      shape.id = base_id + "-" + label;
      for (char& ch : shape.id) {
        if (ch == ' ') ch = '_';
      }
      shape.trigger.pattern = s;
      shape.trigger.constraint = Equals(Value(label));
      shape.trigger.fetch1 = s;
      shape.trigger.branch = Equals(Value(label));
      shape.trigger.run = Action::Block();
      shape.trigger.else_ = Action::Keep();
      std::vector<Protection> protections;
      for (const Rule* other : Triggered(s, Value(label), nullptr)) {
        protections.push_back(Truthful(*other, Equals(Value(label))));
      }
      Emit(shape, {}, protections);
    }
  }

  // A report of x that the platform sees as a fresh change starts its own
  // duration check. Every policy reporting x from a trigger on x restarts
  // the pending timer of the gated rule, in the same branch as the report.
  void MarkPending() {
    for (const Pending& pending : pending_) {
      for (Policy& p : out_.policies) {
        const TriggerSection& t = p.trigger;
        if (!(t.pattern == pending.source)) continue;
        if (SingleLabel(t.constraint, KindOf(pending.source)) != pending.value) continue;
        auto reports = [](const std::optional<Action>& a) {
          return a && IsDataMethod(a->method) && a->method != Method::kBlock;
        };
        bool on_run = reports(t.run);
        bool on_else = reports(t.else_);
        if (!on_run && !on_else) continue;
        CheckItem item = Pure(pending.source, Equals(Value(pending.value)));
        item.run = Action::StartTimer(pending.timer_id);
        if (t.fetch1 && !(on_run && on_else)) {
          item.fetch1 = t.fetch1;
          item.branch = t.branch;
          if (!on_run) item.run = Action::Block();
          item.else_ = on_else ? Action::StartTimer(pending.timer_id) : Action::Block();
        }
        p.check.push_back(std::move(item));
        ValidatePolicy(p, registry_);
      }
    }
  }

  void Note(const std::string& text) {
    if (std::find(out_.notes.begin(), out_.notes.end(), text) == out_.notes.end()) {
      out_.notes.push_back(text);
    }
  }

  const std::vector<Rule>& rules_;
  const DeviceRegistry& registry_;
  const CompileOptions& options_;
  std::set<Source> triggers_;
  std::set<Source> conditions_;
  std::set<Source> mirrored_;
  struct Pending {
    Source source;
    std::string value;
    std::string timer_id;
  };
  std::vector<Pending> pending_;
  CompiledRuleSet out_;
};

}  // namespace

std::vector<Policy> CompileRule(const Rule& rule, const DeviceRegistry& registry) {
  ValidateRule(rule, registry);
  if (rule.sustained_for) return CompileTimerRule(rule, registry);
  if (rule.event_source.type != SourceType::kDevice) {
    throw Unsupported("rule " + rule.id + ": rules triggered by time are not compiled");
  }
  const Source& s = rule.event_source;
  const AttributeKind& kind = registry.Kind(s);
  Policy p;
  p.id = "AP-" + rule.id;
  p.rule_id = rule.id;
  p.trigger.pattern = s;
  p.trigger.constraint = rule.event;
  p.trigger.fetch1 = s;
  p.trigger.branch = rule.event;
  p.trigger.run = kind.kind == ValueKind::kBinary ? Action::DiffKeep() : Action::Keep();
  p.trigger.else_ = Action::Keep();
  if (rule.time_window) p.check.push_back(TimeIn(*rule.time_window));
  for (const Condition& c : rule.conditions) {
    p.check.push_back(Refresh(c.source, c.constraint, registry.Kind(c.source)));
  }
  for (const Command& cmd : rule.actions) {
    if (cmd.kind != Command::Kind::kSet) continue;
    p.check.push_back(Pure(cmd.target, Equals(cmd.value).Negated()));
  }
  ValidatePolicy(p, registry);
  return {p};
}

std::vector<Policy> CompileTimerRule(const Rule& rule, const DeviceRegistry& registry) {
  ValidateRule(rule, registry);
  if (!rule.sustained_for) throw Unsupported("rule " + rule.id + " has no duration");
  const Source& s = rule.event_source;
  const AttributeKind& kind = registry.Kind(s);
  std::optional<std::string> x;
  if (s.type == SourceType::kDevice && kind.kind == ValueKind::kBinary) {
    x = SingleLabel(rule.event, kind);
  }
  if (!x) {
    throw Unsupported("rule " + rule.id + ": a duration needs an event selecting one value of "
                      "a binary attribute");
  }
  Callback callback;
  callback.after_ms = *rule.sustained_for;
  callback.run = Action::Keep();

  Policy start;
  start.id = "AP-" + rule.id + "-start";
  start.rule_id = rule.id;
  start.trigger.pattern = s;
  start.trigger.constraint = Equals(Value(*x));
  start.trigger.run = Action::StartTimer(rule.id);
  CheckItem item = Pure(s, Equals(Value(*x)));
  item.run = Action::AddCallback(rule.id, callback);
  start.check.push_back(item);

  Policy stop;
  stop.id = "AP-" + rule.id + "-stop";
  stop.rule_id = rule.id;
  stop.trigger.pattern = s;
  stop.trigger.constraint = Equals(Value(kind.Other(*x)));
  stop.trigger.run = Action::StopTimer(rule.id);

  ValidatePolicy(start, registry);
  ValidatePolicy(stop, registry);
  return {start, stop};
}

CompiledRuleSet CompileRuleSet(const std::vector<Rule>& rules, const DeviceRegistry& registry,
                               const CompileOptions& options) {
  for (const Rule& r : rules) ValidateRule(r, registry);
  return SetCompiler(rules, registry, options).Run();
}

}  // namespace flowguard
