#include "flowguard/platform.h"

#include <algorithm>
#include <functional>

#include "flowguard/error.h"

namespace flowguard {

std::string MethodCall::Name() const {
  if (command.kind == Command::Kind::kNotify) return "notify(" + command.message + ")";
  return command.target.subject + "." + command.target.attribute + "=" +
         command.value.ToString();
}

namespace {

bool Holds(const Value& v, const Constraint& c) {
  try {
    return Satisfy(v, c);
  } catch (const TypeMismatch&) {
    return false;
  }
}

}  // namespace

Platform::Platform(const DeviceRegistry& registry, std::vector<Rule> rules)
    : registry_(registry), rules_(std::move(rules)), holds_(rules_.size()) {
  for (const Rule& r : rules_) ValidateRule(r, registry_);
}

std::optional<Value> Platform::Get(const Source& source) const {
  auto it = store_.find(source);
  if (it == store_.end()) return std::nullopt;
  return it->second;
}

bool Platform::ConditionsHold(const Rule& rule, int64_t at) const {
  if (rule.time_window && !rule.time_window->Contains(MinuteOfDay(at))) return false;
  for (const Condition& c : rule.conditions) {
    std::optional<Value> v = Get(c.source);
    if (!v) v = registry_.InitialValue(c.source);
    if (!v || !Holds(*v, c.constraint)) return false;
  }
  return true;
}

void Platform::Execute(const Rule& rule, int64_t at) {
  for (const Command& cmd : rule.actions) calls_.push_back({at, rule.id, cmd});
}

void Platform::RunDue(int64_t t, bool inclusive) {
  auto cmp = std::greater<Check>();
  while (!checks_.empty()) {
    const Check& top = checks_.front();
    if (inclusive ? top.due > t : top.due >= t) break;
    std::pop_heap(checks_.begin(), checks_.end(), cmp);
    Check c = checks_.back();
    checks_.pop_back();
    now_ = std::max(now_, c.due);
    const Hold& h = holds_[c.rule];
    if (h.holding && h.epoch == c.epoch && ConditionsHold(rules_[c.rule], c.due)) {
      Execute(rules_[c.rule], c.due);
    }
  }
}

std::optional<int64_t> Platform::NextCheck() const {
  if (checks_.empty()) return std::nullopt;
  return checks_.front().due;
}

void Platform::AdvanceTo(int64_t t) {
  RunDue(t, true);
  now_ = std::max(now_, t);
}

std::optional<FiredEvent> Platform::Ingest(const PlatformMessage& m) {
  if (m.arrival < now_) {
    throw Error("platform message at " + std::to_string(m.arrival) + " arrives after time " +
                std::to_string(now_));
  }
  RunDue(m.arrival, false);
  now_ = m.arrival;
  const AttributeKind& kind = registry_.Kind(m.source);
  registry_.CheckValue(m.source, m.value);
  auto it = store_.find(m.source);
  bool fire = kind.kind == ValueKind::kNumeric || it == store_.end() || !(it->second == m.value);
  store_[m.source] = m.value;
  if (!fire) return std::nullopt;
  FiredEvent ev{m.arrival, m.source, m.value};
  events_.push_back(ev);
  for (size_t i = 0; i < rules_.size(); ++i) {
    const Rule& rule = rules_[i];
    if (!(rule.event_source == m.source)) continue;
    bool holds = Holds(m.value, rule.event);
    if (!rule.sustained_for) {
      if (holds && ConditionsHold(rule, now_)) Execute(rule, now_);
      continue;
    }
    Hold& h = holds_[i];
    if (holds && !h.holding) {
      h.holding = true;
      h.since = m.observed;
      ++h.epoch;
      int64_t due = std::max(now_, h.since + *rule.sustained_for);
      if (due <= now_) {
        if (ConditionsHold(rule, now_)) Execute(rule, now_);
      } else {
        checks_.push_back({due, order_++, i, h.epoch});
        std::push_heap(checks_.begin(), checks_.end(), std::greater<Check>());
      }
    } else if (!holds && h.holding) {
      h.holding = false;
      ++h.epoch;
    }
  }
  return ev;
}

void StateHistory::Add(const DataItem& item) {
  auto& s = series_[item.source];
  if (!s.empty() && item.timestamp < s.back().first) {
    throw Error("state history items out of order for " + item.source.ToString());
  }
  s.emplace_back(item.timestamp, item.value);
}

std::optional<Value> StateHistory::At(const Source& source, int64_t t) const {
  auto it = series_.find(source);
  if (it != series_.end()) {
    const auto& s = it->second;
    auto pos = std::upper_bound(s.begin(), s.end(), t,
                                [](int64_t x, const auto& e) { return x < e.first; });
    if (pos != s.begin()) return std::prev(pos)->second;
  }
  if (registry_ && registry_->Has(source)) return registry_->InitialValue(source);
  return std::nullopt;
}

std::optional<int64_t> StateHistory::LastChange(const Source& source, int64_t t) const {
  auto it = series_.find(source);
  if (it == series_.end()) return std::nullopt;
  const auto& s = it->second;
  auto pos = std::upper_bound(s.begin(), s.end(), t,
                              [](int64_t x, const auto& e) { return x < e.first; });
  if (pos == s.begin()) return std::nullopt;
  return std::prev(pos)->first;
}

std::vector<MethodCall> DedupCalls(const std::vector<MethodCall>& calls,
                                   const StateHistory& history) {
  std::vector<MethodCall> out;
  std::map<Source, std::pair<int64_t, Value>> issued;
  for (const MethodCall& c : calls) {
    if (c.command.kind == Command::Kind::kNotify) {
      out.push_back(c);
      continue;
    }
    const Source& target = c.command.target;
    std::optional<Value> state = history.At(target, c.t);
    auto it = issued.find(target);
    if (it != issued.end()) {
      std::optional<int64_t> last = history.LastChange(target, c.t);
      if (!last || it->second.first >= *last) state = it->second.second;
    }
    if (state && *state == c.command.value) continue;
    issued[target] = {c.t, c.command.value};
    out.push_back(c);
  }
  return out;
}

std::vector<std::pair<size_t, size_t>> MatchCalls(const std::vector<MethodCall>& a,
                                                  const std::vector<MethodCall>& b,
                                                  int64_t tolerance_ms) {
  // Longest chain of matching pairs increasing in both indices (Hunt and
  // Szymanski). Candidates for a[i] lie in a sliding time window over b.
  struct Node {
    size_t i, j;
    int prev;
  };
  std::vector<Node> nodes;
  std::vector<int> tails;  // tails[k]: node ending the best chain of length k+1
  size_t lo = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    while (lo < b.size() && b[lo].t < a[i].t - tolerance_ms) ++lo;
    std::string name = a[i].Name();
    std::vector<size_t> js;
    for (size_t j = lo; j < b.size() && b[j].t <= a[i].t + tolerance_ms; ++j) {
      if (b[j].Name() == name) js.push_back(j);
    }
    for (auto it = js.rbegin(); it != js.rend(); ++it) {
      size_t j = *it;
      auto pos = std::lower_bound(tails.begin(), tails.end(), j,
                                  [&](int node, size_t x) { return nodes[node].j < x; });
      int prev = pos == tails.begin() ? -1 : *std::prev(pos);
      nodes.push_back({i, j, prev});
      int id = static_cast<int>(nodes.size()) - 1;
      if (pos == tails.end()) {
        tails.push_back(id);
      } else {
        *pos = id;
      }
    }
  }
  std::vector<std::pair<size_t, size_t>> out;
  for (int n = tails.empty() ? -1 : tails.back(); n >= 0; n = nodes[n].prev) {
    out.emplace_back(nodes[n].i, nodes[n].j);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace flowguard
