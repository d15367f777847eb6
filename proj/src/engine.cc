#include "flowguard/engine.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flowguard/error.h"

namespace flowguard {

EngineConfig EngineConfig::FromJson(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("engine config: ") + e.what(), 0);
  }
  EngineConfig c;
  try {
    c.diff_keep_delay_ms = j.value("diff_keep_delay_ms", c.diff_keep_delay_ms);
    c.tick_ms = j.value("tick_ms", c.tick_ms);
    c.seed = j.value("seed", c.seed);
    c.pass_through = j.value("pass_through", c.pass_through);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("engine config: ") + e.what(), 0);
  }
  if (c.diff_keep_delay_ms <= 0) throw Error("engine config: diff_keep_delay_ms must be > 0");
  if (c.tick_ms <= 0) throw Error("engine config: tick_ms must be > 0");
  return c;
}

EngineConfig EngineConfig::LoadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open engine config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return FromJson(buf.str());
}

std::optional<int64_t> Timer::NextDue() const {
  if (!started_at) return std::nullopt;
  std::optional<int64_t> due;
  for (const Pending& p : callbacks) {
    if (p.raised) continue;
    int64_t t = *started_at + p.callback.after_ms;
    if (!due || t < *due) due = t;
  }
  return due;
}

std::vector<Policy> OrderPolicies(std::vector<Policy> aps, std::vector<Policy> ups) {
  std::set<std::string> ids;
  std::optional<int> max_ap;
  std::optional<int> min_up;
  for (const Policy& p : aps) {
    if (p.origin != Origin::kAutomation) {
      throw InvalidPolicy("policy " + p.id + " is a user policy in the automation set");
    }
    if (!ids.insert(p.id).second) throw DuplicateId("duplicate policy id " + p.id);
    max_ap = max_ap ? std::max(*max_ap, p.priority) : p.priority;
  }
  for (const Policy& p : ups) {
    if (p.origin != Origin::kUser) {
      throw InvalidPolicy("policy " + p.id + " is an automation policy in the user set");
    }
    if (!ids.insert(p.id).second) throw DuplicateId("duplicate policy id " + p.id);
    min_up = min_up ? std::min(*min_up, p.priority) : p.priority;
  }
  if (max_ap && min_up && *max_ap >= *min_up) {
    throw InvalidPolicy("automation policy priorities must be below user policy priorities");
  }
  std::vector<Policy> out = std::move(ups);
  out.insert(out.end(), std::make_move_iterator(aps.begin()),
             std::make_move_iterator(aps.end()));
  return out;
}

Engine::Engine(const DeviceRegistry& registry, EngineConfig config)
    : registry_(registry), config_(config), stores_(&registry), rng_(config.seed) {}

void Engine::LoadPolicies(std::vector<Policy> aps, std::vector<Policy> ups) {
  for (const Policy& p : aps) ValidatePolicy(p, registry_);
  for (const Policy& p : ups) ValidatePolicy(p, registry_);
  policies_ = OrderPolicies(std::move(aps), std::move(ups));
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

std::optional<Value> Engine::Fetch(const Source& source, int64_t at) const {
  switch (source.type) {
    case SourceType::kDevice:
      return stores_.Db(source);
    case SourceType::kTime:
      return Value(MinuteOfDay(at));
    case SourceType::kTimer: {
      auto it = timers_.find(source.attribute);
      if (it == timers_.end() || !it->second.running()) return std::nullopt;
      return Value(static_cast<double>(at - *it->second.started_at));
    }
  }
  return std::nullopt;
}

std::optional<Value> Engine::FetchStar(const Source& source, int64_t at) const {
  if (source.type == SourceType::kDevice) return stores_.DbStar(source);
  return Fetch(source, at);
}

void Engine::Evaluate(const Policy& policy, const DataItem& item, Evaluation* out) {
  const TriggerSection& t = policy.trigger;
  if (!Match(item.source, t.pattern)) return;
  if (!Holds(item.value, t.constraint)) return;
  std::vector<DataItem> check_data;
  check_data.reserve(policy.check.size());
  for (const CheckItem& c : policy.check) {
    std::optional<Value> v = Fetch(c.fetch, now_);
    if (!v || !Holds(*v, c.constraint)) return;
    int64_t observed = now_;
    if (c.fetch.type == SourceType::kDevice) {
      if (auto entry = stores_.DbEntry(c.fetch)) observed = entry->observed;
    }
    check_data.push_back({c.fetch, *v, observed});
  }
  auto choose = [&](const std::optional<Source>& fetch1, const std::optional<Constraint>& branch,
                    const Action& run, const std::optional<Action>& else_) -> const Action* {
    if (!fetch1) return &run;
    std::optional<Value> star = FetchStar(*fetch1, now_);
    if (star && Holds(*star, *branch)) return &run;
    return else_ ? &*else_ : nullptr;
  };
  auto handle = [&](const Action* action, const DataItem& datum, int klass) {
    if (!action) return;
    if (IsDataMethod(action->method)) {
      ApplyData(*action, datum, klass, policy, out);
    } else {
      out->effects.push_back({*action, datum, policy.id});
    }
  };
  handle(choose(t.fetch1, t.branch, t.run, t.else_), item, 1);
  for (size_t i = 0; i < policy.check.size(); ++i) {
    const CheckItem& c = policy.check[i];
    handle(choose(c.fetch1, c.branch, c.run, c.else_), check_data[i], 0);
  }
}

void Engine::ApplyData(const Action& action, const DataItem& datum, int klass,
                       const Policy& policy, Evaluation* out) {
  if (action.method == Method::kBlock) return;
  const AttributeKind& kind = registry_.Kind(datum.source);
  std::vector<Emission> emissions =
      ApplyMethod(action, datum.value, kind, rng_, config_.diff_keep_delay_ms);
  for (size_t i = 0; i < emissions.size(); ++i) {
    Scheduled s;
    s.envelope.source = datum.source;
    s.envelope.value = emissions[i].value;
    s.envelope.emit_at = now_ + emissions[i].delay;
    bool fake = action.method == Method::kDiffKeep && i == 0;
    s.envelope.observed_at = fake ? s.envelope.emit_at : datum.timestamp;
    s.envelope.policy_id = policy.id;
    s.batch = batch_;
    s.klass = klass;
    s.seq = seq_++;
    s.action = action;
    s.from_user = policy.origin == Origin::kUser;
    out->reports.push_back(std::move(s));
  }
}

void Engine::RunCallbacks(Timer& timer, Evaluation* out) {
  if (!timer.running()) return;
  int64_t elapsed = now_ - *timer.started_at;
  std::vector<Timer::Pending> due;
  std::vector<Timer::Pending> rest;
  for (Timer::Pending& p : timer.callbacks) {
    (p.callback.after_ms <= elapsed ? due : rest).push_back(std::move(p));
  }
  timer.callbacks = std::move(rest);
  if (timer.callbacks.empty()) timer.started_at.reset();
  for (const Timer::Pending& p : due) {
    const Callback& cb = p.callback;
    const Action* action = &cb.run;
    if (cb.fetch1) {
      std::optional<Value> star = FetchStar(*cb.fetch1, now_);
      if (!(star && Holds(*star, *cb.branch))) action = cb.else_ ? &*cb.else_ : nullptr;
    }
    if (!action) continue;
    Policy owner;
    owner.id = p.policy_id;
    ApplyData(*action, p.datum, 1, owner, out);
  }
}

void Engine::ApplyEffects(const std::vector<TimerEffect>& effects, Evaluation* out) {
  for (const TimerEffect& e : effects) {
    Timer& timer = timers_[e.action.timer_id];
    timer.id = e.action.timer_id;
    switch (e.action.method) {
      case Method::kStartTimer:
        timer.started_at = now_;
        timer.callbacks.clear();
        break;
      case Method::kStopTimer:
        timer.started_at.reset();
        timer.callbacks.clear();
        break;
      case Method::kAddCallback:
        timer.callbacks.push_back({*e.action.callback, e.datum, e.policy_id, false});
        break;
      case Method::kFireTimer:
        RunCallbacks(timer, out);
        break;
      default:
        break;
    }
  }
}

void Engine::Step(const DataItem& item) {
  ++batch_;
  Evaluation ev;
  bool matched = false;
  for (const Policy& p : policies_) {
    if (Match(item.source, p.trigger.pattern)) matched = true;
    Evaluate(p, item, &ev);
  }
  if (item.source.type == SourceType::kTimer && !matched) {
    ev.effects.push_back({Action::FireTimer(item.source.attribute), item, "engine"});
  }
  ApplyEffects(ev.effects, &ev);
  Schedule(std::move(ev.reports));
}

void Engine::RaiseTimer(const std::string& id, int64_t due) {
  Timer& timer = timers_.at(id);
  for (Timer::Pending& p : timer.callbacks) {
    if (!p.raised && *timer.started_at + p.callback.after_ms == due) p.raised = true;
  }
  DataItem item{Source::Timer(id), Value(static_cast<double>(due - *timer.started_at)), due};
  Step(item);
}

void Engine::Schedule(std::vector<Scheduled> reports) {
  auto before = [](const Scheduled& a, const Scheduled& b) {
    if (a.envelope.emit_at != b.envelope.emit_at) return a.envelope.emit_at < b.envelope.emit_at;
    if (a.batch != b.batch) return a.batch < b.batch;
    if (a.klass != b.klass) return a.klass < b.klass;
    return a.seq < b.seq;
  };
  std::sort(reports.begin(), reports.end(), before);
  for (Scheduled& r : reports) {
    bool merged = std::any_of(queue_.begin(), queue_.end(), [&](const Scheduled& q) {
      return q.envelope.source == r.envelope.source && q.envelope.emit_at == r.envelope.emit_at &&
             (q.envelope.value == r.envelope.value || q.action == r.action);
    });
    if (merged) continue;
    auto pos = std::upper_bound(queue_.begin(), queue_.end(), r, before);
    queue_.insert(pos, std::move(r));
  }
}

bool Engine::Suppressed(const Scheduled& s) {
  const ReportEnvelope& env = s.envelope;
  for (const Policy& up : policies_) {
    if (up.origin != Origin::kUser) break;  // user policies come first
    if (!(up.trigger.pattern == env.source)) continue;
    Value probe = stores_.Db(env.source).value_or(env.value);
    if (!Holds(probe, up.trigger.constraint)) continue;
    bool applies = true;
    for (const CheckItem& c : up.check) {
      std::optional<Value> v = Fetch(c.fetch, env.emit_at);
      if (!v || !Holds(*v, c.constraint)) {
        applies = false;
        break;
      }
    }
    if (!applies) continue;
    const Action* action = &up.trigger.run;
    if (up.trigger.fetch1) {
      std::optional<Value> star = FetchStar(*up.trigger.fetch1, env.emit_at);
      if (!(star && Holds(*star, *up.trigger.branch))) {
        action = up.trigger.else_ ? &*up.trigger.else_ : nullptr;
      }
    }
    if (!action || action->method == Method::kBlock) return true;
  }
  return false;
}

void Engine::Flush(int64_t upto, std::vector<ReportEnvelope>* out) {
  size_t n = 0;
  while (n < queue_.size() && queue_[n].envelope.emit_at <= upto) {
    const Scheduled& s = queue_[n++];
    if (!s.from_user && Suppressed(s)) {
      ++suppressed_;
      continue;
    }
    const ReportEnvelope& env = s.envelope;
    stores_.UpdateDbStar(env.source, env.value, env.emit_at, env.observed_at);
    out->push_back(env);
  }
  queue_.erase(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(n));
}

std::optional<int64_t> Engine::NextTimerDue(std::string* id) const {
  std::optional<int64_t> best;
  for (const auto& [name, timer] : timers_) {
    std::optional<int64_t> due = timer.NextDue();
    if (due && (!best || *due < *best)) {
      best = due;
      if (id) *id = name;
    }
  }
  return best;
}

std::optional<int64_t> Engine::NextDue() const {
  std::optional<int64_t> due = NextTimerDue(nullptr);
  if (!queue_.empty()) {
    int64_t q = queue_.front().envelope.emit_at;
    if (!due || q < *due) due = q;
  }
  return due;
}

std::vector<ReportEnvelope> Engine::OnTick(int64_t now) {
  std::vector<ReportEnvelope> out;
  while (true) {
    std::string id;
    std::optional<int64_t> timer_due = NextTimerDue(&id);
    std::optional<int64_t> queued;
    if (!queue_.empty()) queued = queue_.front().envelope.emit_at;
    if (queued && *queued <= now && (!timer_due || *queued <= *timer_due)) {
      now_ = std::max(now_, *queued);
      Flush(*queued, &out);
    } else if (timer_due && *timer_due <= now) {
      now_ = std::max(now_, *timer_due);
      RaiseTimer(id, *timer_due);
      Flush(now_, &out);
    } else {
      break;
    }
  }
  now_ = std::max(now_, now);
  started_ = true;
  return out;
}

std::vector<ReportEnvelope> Engine::OnEvent(const DataItem& item) {
  if (item.source.type != SourceType::kDevice) {
    throw Error("engine input must come from a device, got " + item.source.ToString());
  }
  if (started_ && item.timestamp < now_) {
    throw Error("item at " + std::to_string(item.timestamp) + " arrives after time " +
                std::to_string(now_));
  }
  std::vector<ReportEnvelope> out = OnTick(item.timestamp - 1);
  now_ = item.timestamp;
  stores_.UpdateDb(item);
  if (config_.pass_through) {
    ReportEnvelope env{item.source, item.value, item.timestamp, item.timestamp, "pass-through"};
    stores_.UpdateDbStar(env.source, env.value, env.emit_at, env.observed_at);
    out.push_back(env);
    return out;
  }
  Step(item);
  Flush(now_, &out);
  return out;
}

// ---------------------------------------------------------------------------

EngineLoop::EngineLoop(Engine* engine, Sink sink)
    : engine_(engine), sink_(std::move(sink)), thread_([this] { Run(); }) {}

EngineLoop::~EngineLoop() { Stop(); }

void EngineLoop::Submit(DataItem item) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    tasks_.emplace_back(std::move(item));
  }
  cv_.notify_one();
}

void EngineLoop::Tick(int64_t now) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    tasks_.emplace_back(now);
  }
  cv_.notify_one();
}

void EngineLoop::Drain() {
  std::unique_lock<std::mutex> lock(mu_);
  idle_cv_.wait(lock, [this] { return tasks_.empty() && !busy_; });
}

void EngineLoop::Stop() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (stopping_ && !thread_.joinable()) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

std::optional<std::string> EngineLoop::error() const {
  std::lock_guard<std::mutex> lock(mu_);
  return error_;
}

void EngineLoop::Run() {
  while (true) {
    Task task;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !tasks_.empty(); });
      if (tasks_.empty()) return;
      task = std::move(tasks_.front());
      tasks_.pop_front();
      busy_ = true;
    }
    try {
      std::vector<ReportEnvelope> out;
      if (const DataItem* item = std::get_if<DataItem>(&task)) {
        out = engine_->OnEvent(*item);
      } else {
        out = engine_->OnTick(std::get<int64_t>(task));
      }
      for (const ReportEnvelope& env : out) sink_(env);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!error_) error_ = e.what();
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      busy_ = false;
      if (tasks_.empty()) idle_cv_.notify_all();
    }
  }
}

}  // namespace flowguard
