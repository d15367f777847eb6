#include "flowguard/trace.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

#include <json.hpp>

#include "flowguard/error.h"
#include "flowguard/platform.h"

namespace flowguard {

using nlohmann::json;

namespace {

std::string ShortName(const Source& s) { return s.subject + "." + s.attribute; }

}  // namespace

void WriteTrace(std::ostream& out, const std::vector<DataItem>& items) {
  for (const DataItem& item : items) {
    json j;
    j["t"] = item.timestamp;
    j["src"] = ShortName(item.source);
    if (item.value.is_number()) {
      j["v"] = item.value.number();
    } else {
      j["v"] = item.value.label();
    }
    out << j.dump() << "\n";
  }
}

std::vector<DataItem> ReadTrace(std::istream& in, const DeviceRegistry& registry) {
  std::vector<DataItem> items;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    DataItem item;
    try {
      json j = json::parse(line);
      item.timestamp = j.at("t").get<int64_t>();
      item.source = Source::Parse(j.at("src").get<std::string>());
      const json& v = j.at("v");
      if (v.is_number()) {
        item.value = Value(v.get<double>());
      } else {
        item.value = Value(v.get<std::string>());
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("trace: ") + e.what(), n);
    } catch (const ParseError& e) {
      throw ParseError(std::string("trace: ") + e.what(), n);
    }
    registry.CheckValue(item.source, item.value);
    if (!items.empty() && item.timestamp <= items.back().timestamp) {
      throw ParseError("trace: timestamps must increase", n);
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<DataItem> LoadTraceFile(const std::string& path, const DeviceRegistry& registry) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace '" + path + "'");
  return ReadTrace(in, registry);
}

WorkloadParams WorkloadParams::FromJson(std::string_view text, const DeviceRegistry& registry) {
  WorkloadParams p;
  try {
    json j = json::parse(text);
    p.days = j.value("days", p.days);
    if (!(p.days > 0)) throw Error("workload: days must be > 0");
    for (const auto& [name, c] : j.at("channels").items()) {
      Source source = Source::Parse(name);
      const AttributeKind& kind = registry.Kind(source);
      ChannelParams ch;
      ch.count = c.at("count").get<double>();
      ch.first_share = c.value("first_share", ch.first_share);
      ch.model = c.value("model", "");
      ch.mean = c.value("mean", ch.mean);
      ch.sigma = c.value("sigma", ch.sigma);
      ch.theta = c.value("theta", ch.theta);
      ch.peak = c.value("peak", ch.peak);
      ch.floor = c.value("floor", ch.floor);
      ch.spike_p = c.value("spike_p", ch.spike_p);
      ch.spike_lo = c.value("spike_lo", ch.spike_lo);
      ch.spike_hi = c.value("spike_hi", ch.spike_hi);
      ch.lo = c.value("lo", ch.lo);
      ch.hi = c.value("hi", ch.hi);
      ch.follows = c.value("follows", "");
      ch.long_share = c.value("long_share", ch.long_share);
      ch.long_mean_s = c.value("long_mean_s", ch.long_mean_s);
      ch.away_factor = c.value("away_factor", ch.away_factor);
      for (const std::string& o : c.value("occupancy", std::vector<std::string>{})) {
        Source gate = Source::Parse(o);
        if (registry.Kind(gate).kind != ValueKind::kBinary) {
          throw Error("workload: " + name + ": occupancy source " + o + " is not binary");
        }
        ch.occupancy.push_back(gate);
      }
      if (!(ch.count > 0)) throw Error("workload: " + name + ": count must be > 0");
      if (kind.kind == ValueKind::kNumeric) {
        static const char* kModels[] = {"revert", "daylight", "spiky", "load"};
        if (std::find(std::begin(kModels), std::end(kModels), ch.model) == std::end(kModels)) {
          throw Error("workload: " + name + ": unknown model '" + ch.model + "'");
        }
        if (ch.model == "load") registry.Kind(Source::Parse(ch.follows));
      } else if (kind.kind == ValueKind::kBinary) {
        if (!(ch.first_share > 0 && ch.first_share < 1)) {
          throw Error("workload: " + name + ": first_share must lie in (0, 1)");
        }
        if (ch.long_share < 0 || ch.long_share >= 1) {
          throw Error("workload: " + name + ": long_share must lie in [0, 1)");
        }
        double second = (1 - ch.first_share) * 2 * p.days * 86400 / ch.count;
        if (ch.long_share > 0 && !(ch.long_share * ch.long_mean_s < second)) {
          throw Error("workload: " + name + ": long dwells leave no room for short ones");
        }
        if (ch.away_factor < 0 || ch.away_factor > 1) {
          throw Error("workload: " + name + ": away_factor must lie in [0, 1]");
        }
      } else {
        throw Error("workload: " + name + ": enumerated attributes are not generated");
      }
      p.channels[source] = ch;
    }
    for (const auto& [source, ch] : p.channels) {
      for (const Source& gate : ch.occupancy) {
        auto it = p.channels.find(gate);
        if (it == p.channels.end() || !it->second.occupancy.empty()) {
          throw Error("workload: occupancy source " + gate.ToString() +
                      " must be an ungated channel");
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("workload: ") + e.what());
  }
  return p;
}

WorkloadParams WorkloadParams::LoadFile(const std::string& path,
                                        const DeviceRegistry& registry) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open workload '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return FromJson(buf.str(), registry);
}

namespace {

constexpr int64_t kSecond = 1000;
constexpr int64_t kDay = 86400 * kSecond;

int64_t CeilSecond(double ms) { return static_cast<int64_t>(std::ceil(ms / kSecond)) * kSecond; }

class Generator {
 public:
  Generator(const DeviceRegistry& registry, const WorkloadParams& params,
            const std::vector<Rule>& rules, uint64_t seed)
      : registry_(registry),
        params_(params),
        rng_(seed),
        platform_(registry, rules),
        end_(static_cast<int64_t>(params.days * kDay)) {}

  std::vector<DataItem> Run() {
    Snapshot();
    ScheduleSensors();
    ScheduleManual();
    Loop();
    return std::move(items_);
  }

 private:
  struct Planned {
    int64_t t;
    uint64_t order;
    Source source;
    std::optional<Value> value;  // unset: computed at emission
  };
  struct Later {
    bool operator()(const Planned& a, const Planned& b) const {
      return a.t != b.t ? a.t > b.t : a.order > b.order;
    }
  };
  using Queue = std::priority_queue<Planned, std::vector<Planned>, Later>;

  double Uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double Normal(double sd) { return std::normal_distribution<double>(0, sd)(rng_); }
  double Exp(double mean) { return std::exponential_distribution<double>(1.0 / mean)(rng_); }

  double Clip(const Source& s, double v) const {
    const AttributeKind& k = registry_.Kind(s);
    return std::clamp(v, k.min, k.max);
  }

  void Snapshot() {
    std::vector<Source> sources = registry_.Sources();
    std::stable_partition(sources.begin(), sources.end(),
                          [&](const Source& s) { return registry_.Spec(s).commandable; });
    for (const Source& s : sources) {
      const AttributeKind& kind = registry_.Kind(s);
      Value v;
      if (kind.kind == ValueKind::kNumeric) {
        auto it = params_.channels.find(s);
        double x = 0;
        if (it != params_.channels.end()) {
          const ChannelParams& c = it->second;
          if (c.model == "revert" || c.model == "spiky") x = c.mean;
          if (c.model == "daylight") x = c.floor;
        }
        numeric_[s] = x;
        v = Value(std::round(Clip(s, x)));
      } else {
        v = registry_.InitialValue(s).value_or(Value(kind.labels.back()));
      }
      state_[s] = v;
      Emit(s, v);
    }
  }

  void ScheduleSensors() {
    // Occupancy sources first, so gated channels can look them up.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& [source, c] : params_.channels) {
        if (registry_.Spec(source).commandable) continue;
        if (c.occupancy.empty() != (pass == 0)) continue;
        if (registry_.Kind(source).kind == ValueKind::kBinary) {
          ScheduleBinary(source, c);
        } else {
          double t = static_cast<double>(last_);
          double gap = static_cast<double>(end_) / c.count;
          while (true) {
            t += Exp(gap);
            if (t >= static_cast<double>(end_)) break;
            Push(sensors_, CeilSecond(t), source, std::nullopt);
          }
        }
      }
    }
  }

  void ScheduleBinary(const Source& source, const ChannelParams& c) {
    const AttributeKind& kind = registry_.Kind(source);
    double cycle = 2.0 * static_cast<double>(end_) / c.count;
    double mean_first = cycle * c.first_share;
    double mean_second = cycle - mean_first;
    double long_mean = c.long_mean_s * kSecond;
    double short_mean =
        c.long_share > 0 ? (mean_second - c.long_share * long_mean) / (1 - c.long_share)
                         : mean_second;
    bool in_first = state_[source] == Value(kind.labels[0]);
    double t = static_cast<double>(last_);
    std::vector<std::pair<int64_t, bool>>& plan = plans_[source];
    while (true) {
      if (in_first) {
        t += Exp(mean_first);
      } else {
        // Rejected changes while away extend the dwell.
        do {
          t += (c.long_share > 0 && Uniform(0, 1) < c.long_share) ? Exp(long_mean)
                                                                   : Exp(short_mean);
        } while (t < static_cast<double>(end_) && !c.occupancy.empty() &&
                 !Occupied(c.occupancy, CeilSecond(t)) && Uniform(0, 1) >= c.away_factor);
      }
      if (t >= static_cast<double>(end_)) break;
      in_first = !in_first;
      Push(sensors_, CeilSecond(t), source, Value(kind.labels[in_first ? 0 : 1]));
      plan.push_back({CeilSecond(t), in_first});
    }
  }

  bool InFirst(const Source& s, int64_t t) {
    const auto& plan = plans_[s];
    auto it = std::upper_bound(plan.begin(), plan.end(), std::make_pair(t, true));
    if (it == plan.begin()) return state_[s] == Value(registry_.Kind(s).labels[0]);
    return std::prev(it)->second;
  }

  bool Occupied(const std::vector<Source>& gates, int64_t t) {
    for (const Source& g : gates) {
      if (InFirst(g, t)) return true;
    }
    return false;
  }

  void ScheduleManual() {
    for (const auto& [source, c] : params_.channels) {
      if (!registry_.Spec(source).commandable) continue;
      double t = static_cast<double>(last_);
      double gap = static_cast<double>(end_) / c.count;
      while (true) {
        t += Exp(gap);
        if (t >= static_cast<double>(end_)) break;
        Push(actuators_, CeilSecond(t), source, std::nullopt);
      }
    }
  }

  void Push(Queue& q, int64_t t, const Source& s, std::optional<Value> v) {
    q.push({t, order_++, s, std::move(v)});
  }

  Value NumericReading(const Source& s, int64_t t) {
    const ChannelParams& c = params_.channels.at(s);
    double& x = numeric_[s];
    if (c.model == "revert") {
      x += c.theta * (c.mean - x) + Normal(c.sigma);
    } else if (c.model == "daylight") {
      double h = static_cast<double>(t % kDay) / 3600000.0;
      double sun = (h > 6 && h < 20) ? std::sin(std::numbers::pi * (h - 6) / 14) : 0;
      x = (c.floor + c.peak * sun) * std::exp(Normal(c.sigma));
    } else if (c.model == "spiky") {
      if (x > c.spike_lo) {
        x -= 0.35 * (x - c.mean);
      } else if (Uniform(0, 1) < c.spike_p) {
        x = Uniform(c.spike_lo, c.spike_hi);
      } else {
        x += 0.1 * (c.mean - x) + Normal(c.sigma);
      }
    } else {
      x = state_[Source::Parse(c.follows)] == Value("on") ? Uniform(c.lo, c.hi) : 0;
    }
    x = Clip(s, x);
    return Value(std::round(x));
  }

  void Emit(const Source& s, const Value& v) {
    int64_t t = items_.empty() ? 0 : last_ + kSecond;
    Emit(s, v, t);
  }

  void Emit(const Source& s, const Value& v, int64_t t) {
    if (!items_.empty()) t = std::max(t, last_ + kSecond);
    last_ = t;
    state_[s] = v;
    items_.push_back({s, v, t});
    platform_.Ingest({s, v, t, t});
    Drive();
  }

  // Turns new platform calls into actuator changes one second later.
  void Drive() {
    const auto& calls = platform_.calls();
    for (; seen_ < calls.size(); ++seen_) {
      const MethodCall& c = calls[seen_];
      if (c.command.kind != Command::Kind::kSet) continue;
      Push(actuators_, c.t + kSecond, c.command.target, c.command.value);
    }
  }

  void Loop() {
    while (true) {
      std::optional<int64_t> ts, ta, tc;
      if (!sensors_.empty()) ts = sensors_.top().t;
      if (!actuators_.empty()) ta = actuators_.top().t;
      tc = platform_.NextCheck();
      int64_t next = end_;
      for (auto x : {ts, ta, tc}) {
        if (x) next = std::min(next, *x);
      }
      if (next >= end_) break;
      if (ts && *ts == next) {
        Planned p = sensors_.top();
        sensors_.pop();
        Value v = p.value ? *p.value : NumericReading(p.source, std::max(p.t, last_ + kSecond));
        Emit(p.source, v, p.t);
      } else if (ta && *ta == next) {
        Planned p = actuators_.top();
        actuators_.pop();
        const AttributeKind& kind = registry_.Kind(p.source);
        Value v = p.value ? *p.value : Value(kind.Other(state_[p.source].label()));
        if (v == state_[p.source]) continue;
        Emit(p.source, v, p.t);
      } else {
        platform_.AdvanceTo(*tc);
        Drive();
      }
    }
  }

  const DeviceRegistry& registry_;
  const WorkloadParams& params_;
  std::mt19937_64 rng_;
  Platform platform_;
  int64_t end_;
  int64_t last_ = 0;
  uint64_t order_ = 0;
  size_t seen_ = 0;
  Queue sensors_;
  Queue actuators_;
  std::map<Source, Value> state_;
  std::map<Source, double> numeric_;
  std::map<Source, std::vector<std::pair<int64_t, bool>>> plans_;
  std::vector<DataItem> items_;
};

}  // namespace

Trace GenerateTrace(const DeviceRegistry& registry, const WorkloadParams& params,
                    const std::vector<Rule>& rules, uint64_t seed) {
  Trace trace;
  trace.seed = seed;
  Generator gen(registry, params, rules, seed);
  trace.items = gen.Run();
  return trace;
}

}  // namespace flowguard
