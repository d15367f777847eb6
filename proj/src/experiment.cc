#include "flowguard/experiment.h"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flowguard/error.h"
#include "flowguard/mediator.h"

namespace flowguard {

LatencyStats Summarize(std::vector<double> xs) {
  LatencyStats s;
  s.n = xs.size();
  if (xs.empty()) return s;
  std::sort(xs.begin(), xs.end());
  auto quantile = [&](double q) {
    double pos = q * static_cast<double>(xs.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
  };
  s.min = xs.front();
  s.max = xs.back();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  return s;
}

std::vector<Policy> CompileForExperiment(const std::vector<Rule>& rules,
                                         const DeviceRegistry& registry,
                                         const ExperimentConfig& config,
                                         std::vector<std::string>* notes) {
  if (config.literal) {
    std::vector<Policy> out;
    for (const Rule& r : rules) {
      for (Policy& p : CompileRule(r, registry)) out.push_back(std::move(p));
    }
    return out;
  }
  CompiledRuleSet set = CompileRuleSet(rules, registry, config.compile);
  if (notes) notes->insert(notes->end(), set.notes.begin(), set.notes.end());
  return std::move(set.policies);
}

namespace {

std::map<std::string, std::vector<MethodCall>> ByRule(const std::vector<MethodCall>& calls) {
  std::map<std::string, std::vector<MethodCall>> out;
  for (const MethodCall& c : calls) out[c.rule_id].push_back(c);
  return out;
}

std::set<Source> Referenced(const std::vector<Rule>& rules, const std::vector<Policy>& ups) {
  std::set<Source> out;
  for (const Rule& r : rules) {
    out.insert(r.event_source);
    for (const Condition& c : r.conditions) out.insert(c.source);
  }
  for (const Policy& p : ups) {
    out.insert(p.trigger.pattern);
    for (const CheckItem& c : p.check) out.insert(c.fetch);
  }
  return out;
}

}  // namespace

ExperimentResult RunExperiment(const DeviceRegistry& registry, const std::vector<Rule>& rules,
                               const std::vector<Policy>& ups,
                               const std::vector<DataItem>& trace,
                               const ExperimentConfig& config) {
  ExperimentResult result;
  MetricsReport& m = result.metrics;
  for (size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].timestamp <= trace[i - 1].timestamp) {
      throw Error("trace timestamps must increase");
    }
  }
  result.policies = CompileForExperiment(rules, registry, config, &m.notes);

  int64_t end = 0;
  if (config.end_ms) {
    end = *config.end_ms;
  } else if (!trace.empty()) {
    int64_t longest = 0;
    for (const Rule& r : rules) longest = std::max(longest, r.sustained_for.value_or(0));
    end = trace.back().timestamp + longest + 2 * config.engine.diff_keep_delay_ms + 1000;
  }

  // Raw side.
  Platform raw(registry, rules);
  for (const DataItem& item : trace) {
    raw.Ingest({item.source, item.value, item.timestamp, item.timestamp});
  }
  raw.AdvanceTo(end);

  // Filtered side.
  Engine engine(registry, config.engine);
  engine.LoadPolicies(result.policies, ups);
  SimBus bus;
  bus.set_logging(false);
  MediatorOptions mo;
  mo.seed = config.engine.seed;
  Mediator mediator(registry, &engine, &bus, mo);
  mediator.RegisterAll();
  Platform filtered(registry, rules);
  bus.Subscribe("data/#", [&](const WireMessage& w) {
    std::optional<Source> source = mediator.SourceOfTopic(w.topic);
    if (!source) throw Error("message on unknown topic " + w.topic);
    auto [value, stamp] = DecodePayload(w.payload);
    int64_t observed = stamp.value_or(w.at);
    filtered.Ingest({*source, value, w.at, observed});
    result.upstream.push_back({*source, value, w.at, observed});
  });
  for (const DataItem& item : trace) mediator.Ingest(item);
  mediator.Tick(end);
  filtered.AdvanceTo(end);

  result.raw_calls = raw.calls();
  result.filtered_calls = filtered.calls();
  result.raw_events = raw.events();
  result.filtered_events = filtered.events();
  m.suppressed = engine.suppressed();

  // Volumes.
  std::map<Source, uint64_t> raw_count, filtered_count;
  for (const DataItem& item : trace) ++raw_count[item.source];
  for (const UpstreamRecord& u : result.upstream) ++filtered_count[u.source];
  std::set<Source> referenced = Referenced(rules, ups);
  for (const Source& s : registry.Sources()) {
    VolumeRow row;
    row.source = s;
    row.raw = raw_count[s];
    row.filtered = filtered_count[s];
    row.rr = row.raw ? 1.0 - static_cast<double>(row.filtered) / static_cast<double>(row.raw) : 0;
    row.referenced = referenced.count(s) > 0;
    m.raw_total += row.raw;
    m.filtered_total += row.filtered;
    m.volumes.push_back(row);
  }
  m.rr = m.raw_total ? 1.0 - static_cast<double>(m.filtered_total) /
                                 static_cast<double>(m.raw_total)
                     : 0;

  // Calls.
  StateHistory history(&registry);
  for (const DataItem& item : trace) history.Add(item);
  auto raw_by_rule = ByRule(result.raw_calls);
  auto filtered_by_rule = ByRule(result.filtered_calls);
  for (const Rule& r : rules) {
    RuleRow row;
    row.rule = r.id;
    const auto& a = raw_by_rule[r.id];
    const auto& b = filtered_by_rule[r.id];
    row.mc_raw = a.size();
    row.mc_filtered = b.size();
    row.inc = std::max(a.size(), b.size()) - MatchCalls(a, b, config.match_tolerance_ms).size();
    std::vector<MethodCall> da = DedupCalls(a, history);
    std::vector<MethodCall> db = DedupCalls(b, history);
    auto matched = MatchCalls(da, db, config.match_tolerance_ms);
    row.inca = std::max(da.size(), db.size()) - matched.size();
    std::vector<double> latency;
    std::vector<bool> used_a(da.size()), used_b(db.size());
    for (auto [i, j] : matched) {
      latency.push_back(static_cast<double>(db[j].t - da[i].t));
      used_a[i] = true;
      used_b[j] = true;
    }
    row.latency = Summarize(std::move(latency));
    for (size_t i = 0; i < da.size(); ++i) {
      if (!used_a[i]) row.unmatched.push_back({1, da[i]});
    }
    for (size_t j = 0; j < db.size(); ++j) {
      if (!used_b[j]) row.unmatched.push_back({2, db[j]});
    }
    m.rules.push_back(std::move(row));
  }
  return result;
}

namespace {

std::string Fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string Pad(std::string s, size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string FormatReport(const MetricsReport& r) {
  std::ostringstream os;
  os << "Data volume (raw, filtered) and reduction rate\n";
  os << Pad("source", 22) << Pad("raw", 8) << Pad("filtered", 10) << "RR\n";
  for (const VolumeRow& v : r.volumes) {
    if (v.raw == 0 && v.filtered == 0) continue;
    os << Pad(v.source.subject + "." + v.source.attribute, 22) << Pad(std::to_string(v.raw), 8)
       << Pad(std::to_string(v.filtered), 10) << Fixed(v.rr, 2) << (v.referenced ? "" : "  *")
       << "\n";
  }
  os << Pad("total", 22) << Pad(std::to_string(r.raw_total), 8)
     << Pad(std::to_string(r.filtered_total), 10) << Fixed(r.rr, 4) << "\n";
  os << "(* not read by any rule or user policy)\n\n";
  os << "Method calls and inconsistencies\n";
  os << Pad("rule", 10) << Pad("MC", 12) << Pad("INC", 6) << Pad("INCA", 6)
     << "latency ms (min/median/mean/max)\n";
  for (const RuleRow& row : r.rules) {
    os << Pad(row.rule, 10)
       << Pad(std::to_string(row.mc_raw) + ", " + std::to_string(row.mc_filtered), 12)
       << Pad(std::to_string(row.inc), 6) << Pad(std::to_string(row.inca), 6);
    if (row.latency.n) {
      os << Fixed(row.latency.min, 0) << "/" << Fixed(row.latency.median, 0) << "/"
         << Fixed(row.latency.mean, 1) << "/" << Fixed(row.latency.max, 0);
    } else {
      os << "-";
    }
    os << "\n";
  }
  if (r.suppressed) os << "\nreports held back by user policies: " << r.suppressed << "\n";
  for (const std::string& n : r.notes) os << "note: " << n << "\n";
  return os.str();
}

std::string ReportToJson(const MetricsReport& r) {
  using nlohmann::json;
  json j;
  json vols = json::array();
  for (const VolumeRow& v : r.volumes) {
    vols.push_back({{"source", v.source.subject + "." + v.source.attribute},
                    {"raw", v.raw},
                    {"filtered", v.filtered},
                    {"rr", v.rr},
                    {"referenced", v.referenced}});
  }
  j["volumes"] = vols;
  json rules = json::array();
  for (const RuleRow& row : r.rules) {
    json lat = {{"n", row.latency.n},         {"min", row.latency.min},
                {"q1", row.latency.q1},       {"median", row.latency.median},
                {"q3", row.latency.q3},       {"mean", row.latency.mean},
                {"max", row.latency.max}};
    json un = json::array();
    for (const Inconsistency& u : row.unmatched) {
      un.push_back({{"system", u.system}, {"t", u.call.t}, {"call", u.call.Name()}});
    }
    rules.push_back({{"rule", row.rule},
                     {"mc", {row.mc_raw, row.mc_filtered}},
                     {"inc", row.inc},
                     {"inca", row.inca},
                     {"latency_ms", lat},
                     {"unmatched", un}});
  }
  j["rules"] = rules;
  j["raw_total"] = r.raw_total;
  j["filtered_total"] = r.filtered_total;
  j["rr"] = r.rr;
  j["suppressed"] = r.suppressed;
  j["notes"] = r.notes;
  return j.dump(2);
}

std::string CallsToJsonl(const std::vector<MethodCall>& calls) {
  std::string out;
  for (const MethodCall& c : calls) {
    nlohmann::json j = {{"t", c.t}, {"rule", c.rule_id}, {"call", c.Name()}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace flowguard
