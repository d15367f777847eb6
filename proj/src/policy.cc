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

#include "flowguard/policy.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "flowguard/error.h"
#include "lexer.h"

namespace flowguard {

using internal::Token;
using internal::TokenKind;
using internal::TokenStream;

std::string_view MethodName(Method method) {
  switch (method) {
    case Method::kKeep: return "keep";
    case Method::kBlock: return "block";
    case Method::kDiffKeep: return "diffKeep";
    case Method::kRandomize: return "randomize";
    case Method::kPickOther: return "pickOther";
    case Method::kStartTimer: return "startTimer";
    case Method::kStopTimer: return "stopTimer";
    case Method::kFireTimer: return "fireTimer";
    case Method::kAddCallback: return "addCallback";
  }
  return "block";
}

std::optional<Method> ParseMethod(std::string_view name) {
  static constexpr Method kAll[] = {
      Method::kKeep,       Method::kBlock,     Method::kDiffKeep,
      Method::kRandomize,  Method::kPickOther, Method::kStartTimer,
      Method::kStopTimer,  Method::kFireTimer, Method::kAddCallback};
  for (Method m : kAll) {
    if (MethodName(m) == name) return m;
  }
  return std::nullopt;
}

bool IsDataMethod(Method method) {
  switch (method) {
    case Method::kKeep:
    case Method::kBlock:
    case Method::kDiffKeep:
    case Method::kRandomize:
    case Method::kPickOther:
      return true;
    default:
      return false;
  }
}

Action Action::Keep(int64_t delay) {
  Action a;
  a.method = Method::kKeep;
  a.delay = delay;
  return a;
}

Action Action::Block() { return Action(); }

Action Action::DiffKeep(int64_t delay) {
  Action a;
  a.method = Method::kDiffKeep;
  a.delay = delay;
  return a;
}

Action Action::Randomize(double lo, double hi, int64_t delay) {
  Action a;
  a.method = Method::kRandomize;
  a.lo = lo;
  a.hi = hi;
  a.delay = delay;
  return a;
}

Action Action::PickOther(std::vector<std::string> choices,
                         std::optional<std::string> current, int64_t delay) {
  Action a;
  a.method = Method::kPickOther;
  a.choices = std::move(choices);
  a.current = std::move(current);
  a.delay = delay;
  return a;
}

Action Action::StartTimer(std::string id) {
  Action a;
  a.method = Method::kStartTimer;
  a.timer_id = std::move(id);
  return a;
}

Action Action::StopTimer(std::string id) {
  Action a;
  a.method = Method::kStopTimer;
  a.timer_id = std::move(id);
  return a;
}

Action Action::FireTimer(std::string id) {
  Action a;
  a.method = Method::kFireTimer;
  a.timer_id = std::move(id);
  return a;
}

Action Action::AddCallback(std::string id, Callback callback) {
  Action a;
  a.method = Method::kAddCallback;
  a.timer_id = std::move(id);
  a.callback = std::make_shared<const Callback>(std::move(callback));
  return a;
}

bool Action::operator==(const Action& other) const {
  if (method != other.method || delay != other.delay) return false;
  switch (method) {
    case Method::kRandomize:
      return lo == other.lo && hi == other.hi;
    case Method::kPickOther:
      return current == other.current && choices == other.choices;
    case Method::kStartTimer:
    case Method::kStopTimer:
    case Method::kFireTimer:
      return timer_id == other.timer_id;
    case Method::kAddCallback:
      if (timer_id != other.timer_id) return false;
      if (!callback || !other.callback) return callback == other.callback;
      return *callback == *other.callback;
    default:
      return true;
  }
}

bool Callback::operator==(const Callback& other) const {
  return after_ms == other.after_ms && fetch1 == other.fetch1 &&
         branch == other.branch && run == other.run && else_ == other.else_;
}

namespace {

std::string ConstraintText(const Constraint& c) {
  std::string text = c.ToString();
  size_t space = text.find(' ');
  return text.substr(0, space) + " -> " + text.substr(space + 1);
}

std::string CallbackText(const Callback& cb) {
  std::string out = "{";
  if (cb.fetch1) {
    out += "fetch1 " + cb.fetch1->ToString() + " branch " + ConstraintText(*cb.branch) + " ";
  }
  out += "run " + cb.run.ToString();
  if (cb.else_) out += " else " + cb.else_->ToString();
  return out + "}";
}

}  // namespace

std::string Action::ToString() const {
  std::string params;
  switch (method) {
    case Method::kRandomize:
      params = FormatNumber(lo) + ", " + FormatNumber(hi);
      break;
    case Method::kPickOther: {
      params = current ? Value(*current).ToToken() : "CUR";
      params += ", {";
      for (size_t i = 0; i < choices.size(); ++i) {
        if (i) params += ", ";
        params += Value(choices[i]).ToToken();
      }
      params += "}";
      break;
    }
    case Method::kStartTimer:
    case Method::kStopTimer:
    case Method::kFireTimer:
      params = timer_id;
      break;
    case Method::kAddCallback:
      params = timer_id + ", " + std::to_string(callback ? callback->after_ms : 0) +
               ", " + (callback ? CallbackText(*callback) : "{run block() 0}");
      break;
    default:
      break;
  }
  return std::string(MethodName(method)) + "(" + params + ") " + std::to_string(delay);
}

std::vector<Emission> ApplyMethod(const Action& action, const Value& current,
                                  const AttributeKind& kind, std::mt19937_64& rng,
                                  int64_t diff_keep_delay) {
  CheckValueOfKind(kind, current, "the processed attribute");
  switch (action.method) {
    case Method::kKeep:
      return {{current, action.delay}};
    case Method::kBlock:
      return {};
    case Method::kDiffKeep: {
      if (kind.kind != ValueKind::kBinary) {
        throw KindMismatch("diffKeep needs a binary attribute");
      }
      Value other(kind.Other(current.label()));
      return {{other, action.delay}, {current, action.delay + diff_keep_delay}};
    }
    case Method::kRandomize: {
      if (kind.kind != ValueKind::kNumeric) {
        throw KindMismatch("randomize needs a numeric attribute");
      }
      if (!(action.lo < action.hi)) throw InvalidPolicy("randomize needs lo < hi");
      std::uniform_real_distribution<double> dist(action.lo, action.hi);
      double sample = dist(rng);
      while (!(sample > action.lo && sample < action.hi)) sample = dist(rng);
      return {{Value(sample), action.delay}};
    }
    case Method::kPickOther: {
      if (!kind.IsLabelKind()) throw KindMismatch("pickOther needs a label attribute");
      std::string cur = action.current ? *action.current : current.label();
      std::vector<std::string> pool;
      bool has_cur = false;
      for (const std::string& choice : action.choices) {
        if (!kind.HasLabel(choice)) {
          throw KindMismatch("pickOther choice '" + choice + "' is not a value of the attribute");
        }
        if (choice == cur) {
          has_cur = true;
        } else if (std::find(pool.begin(), pool.end(), choice) == pool.end()) {
          pool.push_back(choice);
        }
      }
      if (!has_cur || pool.empty()) {
        throw InvalidPolicy("pickOther needs CUR in ENUM and another member");
      }
      std::uniform_int_distribution<size_t> dist(0, pool.size() - 1);
      return {{Value(pool[dist(rng)]), action.delay}};
    }
    default:
      throw InvalidPolicy(std::string(MethodName(action.method)) + " is not a data method");
  }
}

namespace {

[[noreturn]] void Invalid(const Policy& policy, const std::string& message) {
  throw InvalidPolicy("policy " + policy.id + ": " + message);
}

void ValidateDataAction(const Policy& policy, const Action& action, const Source& datum,
                        const DeviceRegistry& registry, bool in_check) {
  if (in_check && action.delay != 0) Invalid(policy, "CHECK actions carry no delay");
  if (action.delay < 0) Invalid(policy, "negative delay");
  if (datum.type != SourceType::kDevice && action.method != Method::kBlock) {
    Invalid(policy, "only block() applies to " + datum.ToString());
  }
  const AttributeKind& kind = registry.Kind(datum);
  switch (action.method) {
    case Method::kDiffKeep:
      if (kind.kind != ValueKind::kBinary) {
        Invalid(policy, "diffKeep on non-binary " + datum.ToString());
      }
      break;
    case Method::kRandomize:
      if (kind.kind != ValueKind::kNumeric) {
        Invalid(policy, "randomize on non-numeric " + datum.ToString());
      }
      if (!(action.lo < action.hi)) Invalid(policy, "randomize needs lo < hi");
      if (action.lo < kind.min || action.hi > kind.max) {
        Invalid(policy, "randomize interval outside the bounds of " + datum.ToString());
      }
      break;
    case Method::kPickOther: {
      if (!kind.IsLabelKind()) Invalid(policy, "pickOther on numeric " + datum.ToString());
      std::set<std::string> distinct(action.choices.begin(), action.choices.end());
      if (distinct.size() < 2) Invalid(policy, "pickOther needs at least two choices");
      for (const std::string& c : action.choices) {
        if (!kind.HasLabel(c)) Invalid(policy, "pickOther choice '" + c + "' not in kind");
      }
      if (action.current && !distinct.count(*action.current)) {
        Invalid(policy, "pickOther CUR not in ENUM");
      }
      break;
    }
    default:
      break;
  }
}

void ValidateBranch(const Policy& policy, const std::optional<Source>& fetch1,
                    const std::optional<Constraint>& branch, bool has_else,
                    const DeviceRegistry& registry) {
  if (fetch1.has_value() != branch.has_value()) {
    Invalid(policy, "branch and fetch1 must appear together");
  }
  if (has_else && !branch) Invalid(policy, "else without branch");
  if (fetch1) {
    if (!registry.Has(*fetch1)) Invalid(policy, "unknown source " + fetch1->ToString());
    if (!Compatible(*branch, registry.Kind(*fetch1))) {
      Invalid(policy, "branch " + branch->ToString() + " does not fit " + fetch1->ToString());
    }
  }
}

void ValidateAction(const Policy& policy, const Action& action, const Source& datum,
                    const DeviceRegistry& registry, bool in_check) {
  if (IsDataMethod(action.method)) {
    ValidateDataAction(policy, action, datum, registry, in_check);
    return;
  }
  if (action.timer_id.empty()) Invalid(policy, "timer method without timer id");
  if (action.delay != 0) Invalid(policy, "timer methods carry no delay");
  if (action.method != Method::kAddCallback) return;
  if (!action.callback) Invalid(policy, "addCallback without callback");
  const Callback& cb = *action.callback;
  if (cb.after_ms < 0) Invalid(policy, "negative callback duration");
  if (!IsDataMethod(cb.run.method) || (cb.else_ && !IsDataMethod(cb.else_->method))) {
    Invalid(policy, "callback actions must be data methods");
  }
  ValidateBranch(policy, cb.fetch1, cb.branch, cb.else_.has_value(), registry);
  ValidateDataAction(policy, cb.run, datum, registry, false);
  if (cb.else_) ValidateDataAction(policy, *cb.else_, datum, registry, false);
}

}  // namespace

void ValidatePolicy(const Policy& policy, const DeviceRegistry& registry) {
  if (policy.id.empty()) throw InvalidPolicy("policy without id");
  const TriggerSection& t = policy.trigger;
  if (!registry.Has(t.pattern)) Invalid(policy, "unknown source " + t.pattern.ToString());
  if (!Compatible(t.constraint, registry.Kind(t.pattern))) {
    Invalid(policy, "constraint " + t.constraint.ToString() + " does not fit " +
                        t.pattern.ToString());
  }
  ValidateBranch(policy, t.fetch1, t.branch, t.else_.has_value(), registry);
  ValidateAction(policy, t.run, t.pattern, registry, false);
  if (t.else_) ValidateAction(policy, *t.else_, t.pattern, registry, false);
  for (const CheckItem& item : policy.check) {
    if (!registry.Has(item.fetch)) Invalid(policy, "unknown source " + item.fetch.ToString());
    if (!Compatible(item.constraint, registry.Kind(item.fetch))) {
      Invalid(policy, "constraint " + item.constraint.ToString() + " does not fit " +
                          item.fetch.ToString());
    }
    ValidateBranch(policy, item.fetch1, item.branch, item.else_.has_value(), registry);
    ValidateAction(policy, item.run, item.fetch, registry, true);
    if (item.else_) ValidateAction(policy, *item.else_, item.fetch, registry, true);
  }
}

// ---------------------------------------------------------------------------
// Text form

namespace {

void AppendBody(std::string* out, const std::string& indent, const std::string& fetch_word,
                const Source& fetch, const Constraint& constraint,
                const std::optional<Source>& fetch1, const std::optional<Constraint>& branch,
                const Action& run, const std::optional<Action>& else_) {
  *out += indent + fetch_word + " " + fetch.ToString() + "\n";
  *out += indent + "satisfy " + ConstraintText(constraint) + "\n";
  if (fetch1) {
    *out += indent + "fetch1 " + fetch1->ToString() + "\n";
    *out += indent + "branch " + ConstraintText(*branch) + "\n";
  }
  *out += indent + "run " + run.ToString() + "\n";
  if (else_) *out += indent + "else " + else_->ToString() + "\n";
}

}  // namespace

std::string SerializePolicy(const Policy& policy) {
  std::string out = "POLICY " + policy.id;
  if (policy.origin == Origin::kAutomation) {
    out += " AP " + (policy.rule_id.empty() ? std::string("-") : policy.rule_id);
  } else {
    out += " UP";
  }
  out += " PRIORITY " + std::to_string(policy.priority) + "\n";
  const TriggerSection& t = policy.trigger;
  out += "TRIGGER: {\n";
  AppendBody(&out, "  ", "match", t.pattern, t.constraint, t.fetch1, t.branch, t.run, t.else_);
  out += "}\n";
  if (policy.check.empty()) {
    out += "CHECK: []\n";
    return out;
  }
  out += "CHECK: [\n";
  for (size_t i = 0; i < policy.check.size(); ++i) {
    const CheckItem& c = policy.check[i];
    out += "  {\n";
    AppendBody(&out, "    ", "fetch", c.fetch, c.constraint, c.fetch1, c.branch, c.run, c.else_);
    out += i + 1 < policy.check.size() ? "  },\n" : "  }\n";
  }
  out += "]\n";
  return out;
}

std::string SerializePolicies(const std::vector<Policy>& policies) {
  std::string out;
  for (size_t i = 0; i < policies.size(); ++i) {
    if (i) out += "\n";
    out += SerializePolicy(policies[i]);
  }
  return out;
}

namespace {

class PolicyParser {
 public:
  explicit PolicyParser(std::string_view text) : in_(internal::Tokenize(text, false)) {}

  std::vector<Policy> ParseAll() {
    std::vector<Policy> out;
    while (!in_.AtEnd()) out.push_back(ParseOne());
    return out;
  }

  Policy ParseOne() {
    Policy policy;
    in_.ExpectWord("POLICY");
    policy.id = in_.ExpectIdentifier("policy id");
    if (in_.AcceptWord("AP")) {
      policy.origin = Origin::kAutomation;
      if (in_.AcceptSymbol("-")) {
        policy.rule_id.clear();
      } else {
        policy.rule_id = in_.ExpectIdentifier("rule id");
      }
      policy.priority = kAutomationPriority;
    } else if (in_.AcceptWord("UP")) {
      policy.origin = Origin::kUser;
      policy.priority = kUserPriority;
    } else {
      in_.Fail("expected AP or UP, found " + internal::Describe(in_.Peek()));
    }
    if (in_.AcceptWord("PRIORITY")) {
      policy.priority = static_cast<int>(in_.ExpectInteger("priority"));
    }
    in_.ExpectWord("TRIGGER");
    in_.ExpectSymbol(":");
    in_.ExpectSymbol("{");
    TriggerSection& t = policy.trigger;
    in_.ExpectWord("match");
    t.pattern = in_.ExpectSource();
    ParseRest(&t.constraint, &t.fetch1, &t.branch, &t.run, &t.else_);
    in_.ExpectSymbol("}");
    in_.ExpectWord("CHECK");
    in_.ExpectSymbol(":");
    in_.ExpectSymbol("[");
    if (!in_.AcceptSymbol("]")) {
      do {
        in_.ExpectSymbol("{");
        CheckItem item;
        in_.ExpectWord("fetch");
        item.fetch = in_.ExpectSource();
        ParseRest(&item.constraint, &item.fetch1, &item.branch, &item.run, &item.else_);
        in_.ExpectSymbol("}");
        policy.check.push_back(std::move(item));
      } while (in_.AcceptSymbol(","));
      in_.ExpectSymbol("]");
    }
    return policy;
  }

 private:
  void ParseRest(Constraint* constraint, std::optional<Source>* fetch1,
                 std::optional<Constraint>* branch, Action* run,
                 std::optional<Action>* else_) {
    in_.ExpectWord("satisfy");
    *constraint = ParseConstraint();
    ParseBranchAndActions(fetch1, branch, run, else_, true);
  }

  void ParseBranchAndActions(std::optional<Source>* fetch1, std::optional<Constraint>* branch,
                             Action* run, std::optional<Action>* else_, bool with_delay) {
    if (in_.IsWord("branch")) in_.Fail("branch without fetch1");
    if (in_.AcceptWord("fetch1")) {
      *fetch1 = in_.ExpectSource();
      if (!in_.IsWord("branch")) in_.Fail("fetch1 without branch");
      in_.ExpectWord("branch");
      *branch = ParseConstraint();
    }
    in_.ExpectWord("run");
    *run = ParseAction(with_delay);
    if (in_.IsWord("else")) {
      if (!branch->has_value()) in_.Fail("else without branch");
      in_.Next();
      *else_ = ParseAction(with_delay);
    }
  }

  Constraint ParseConstraint() {
    const Token& t = in_.Peek();
    std::optional<Op> op;
    if (t.kind == TokenKind::kSymbol || t.kind == TokenKind::kWord) op = ParseOp(t.text);
    if (!op) in_.Fail("expected an operator, found " + internal::Describe(t));
    in_.Next();
    in_.ExpectSymbol("->");
    switch (*op) {
      case Op::kIn:
      case Op::kNotIn:
        return Constraint::InSet(ParseValueSet(), *op == Op::kNotIn);
      case Op::kInWindow: {
        const Token& w = in_.Peek();
        if (w.kind != TokenKind::kClock) in_.Fail("expected a time window");
        try {
          TimeWindow window = TimeWindow::Parse(w.text);
          in_.Next();
          return Constraint::Within(window);
        } catch (const ParseError& e) {
          in_.Fail(e.what(), w);
        }
      }
      default:
        return Constraint::Compare(*op, in_.ExpectValue());
    }
  }

  std::vector<Value> ParseValueSet() {
    std::vector<Value> values;
    in_.ExpectSymbol("{");
    if (in_.AcceptSymbol("}")) return values;
    do {
      values.push_back(in_.ExpectValue());
    } while (in_.AcceptSymbol(","));
    in_.ExpectSymbol("}");
    return values;
  }

  Action ParseAction(bool with_delay) {
    const Token& name = in_.Peek();
    std::optional<Method> method;
    if (name.kind == TokenKind::kWord) method = ParseMethod(name.text);
    if (!method) in_.Fail("unknown method " + internal::Describe(name));
    in_.Next();
    Action action;
    action.method = *method;
    in_.ExpectSymbol("(");
    switch (*method) {
      case Method::kRandomize:
        action.lo = in_.ExpectNumber("lower bound");
        in_.ExpectSymbol(",");
        action.hi = in_.ExpectNumber("upper bound");
        break;
      case Method::kPickOther: {
        if (!in_.AcceptWord("CUR")) action.current = in_.ExpectValue().ToString();
        in_.ExpectSymbol(",");
        for (const Value& v : ParseValueSet()) action.choices.push_back(v.ToString());
        break;
      }
      case Method::kStartTimer:
      case Method::kStopTimer:
      case Method::kFireTimer:
        action.timer_id = in_.ExpectIdentifier("timer id");
        break;
      case Method::kAddCallback: {
        action.timer_id = in_.ExpectIdentifier("timer id");
        in_.ExpectSymbol(",");
        Callback cb;
        cb.after_ms = in_.ExpectInteger("callback duration");
        in_.ExpectSymbol(",");
        in_.ExpectSymbol("{");
        ParseBranchAndActions(&cb.fetch1, &cb.branch, &cb.run, &cb.else_, true);
        in_.ExpectSymbol("}");
        action.callback = std::make_shared<const Callback>(std::move(cb));
        break;
      }
      default:
        break;
    }
    in_.ExpectSymbol(")");
    if (with_delay && in_.Peek().kind == TokenKind::kNumber) {
      action.delay = in_.ExpectInteger("delay");
    }
    return action;
  }

  TokenStream in_;
};

}  // namespace

Policy ParsePolicy(std::string_view text) {
  PolicyParser parser(text);
  std::vector<Policy> all = parser.ParseAll();
  if (all.size() != 1) {
    throw ParseError("expected exactly one policy, found " + std::to_string(all.size()), 0);
  }
  return all.front();
}

std::vector<Policy> ParsePolicies(std::string_view text) {
  return PolicyParser(text).ParseAll();
}

std::vector<Policy> LoadPolicyFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open policy file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return ParsePolicies(buf.str());
}

}  // namespace flowguard
