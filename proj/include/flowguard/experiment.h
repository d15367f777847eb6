// Side-by-side replay of a trace: straight into a platform (raw), and
// through compiler, engine and mediator into a second platform (filtered).
// Metrics compare what each platform received and which calls it made.

#ifndef FLOWGUARD_EXPERIMENT_H_
#define FLOWGUARD_EXPERIMENT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowguard/compiler.h"
#include "flowguard/engine.h"
#include "flowguard/platform.h"
#include "flowguard/policy.h"
#include "flowguard/registry.h"
#include "flowguard/rule.h"

namespace flowguard {

struct ExperimentConfig {
  EngineConfig engine;
  CompileOptions compile;
  // Compile each rule on its own instead of the whole set.
  bool literal = false;
  // Replay end. Unset: last item plus the longest rule duration plus slack.
  std::optional<int64_t> end_ms;
  int64_t match_tolerance_ms = 1000;
};

struct VolumeRow {
  Source source;
  uint64_t raw = 0;
  uint64_t filtered = 0;
  double rr = 0;          // 1 - filtered / raw; 0 when raw is 0
  bool referenced = false;  // some rule or user policy reads it
};

struct LatencyStats {
  size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, mean = 0, max = 0;
};

LatencyStats Summarize(std::vector<double> samples);

struct Inconsistency {
  int system = 1;  // 1: raw side only, 2: filtered side only
  MethodCall call;
};

struct RuleRow {
  std::string rule;
  uint64_t mc_raw = 0;
  uint64_t mc_filtered = 0;
  uint64_t inc = 0;   // max(MC) - matched
  uint64_t inca = 0;  // same after removing redundant calls
  LatencyStats latency;
  std::vector<Inconsistency> unmatched;  // after removing redundant calls
};

struct MetricsReport {
  std::vector<VolumeRow> volumes;
  std::vector<RuleRow> rules;
  uint64_t raw_total = 0;
  uint64_t filtered_total = 0;
  double rr = 0;
  uint64_t suppressed = 0;  // reports held back by user policies
  std::vector<std::string> notes;
};

struct UpstreamRecord {
  Source source;
  Value value;
  int64_t at = 0;
  int64_t observed = 0;
};

struct ExperimentResult {
  MetricsReport metrics;
  std::vector<Policy> policies;
  std::vector<MethodCall> raw_calls;
  std::vector<MethodCall> filtered_calls;
  std::vector<FiredEvent> raw_events;
  std::vector<FiredEvent> filtered_events;
  std::vector<UpstreamRecord> upstream;
};

// Compiles the rules (see ExperimentConfig::literal) into automation
// policies. Notes of the set compiler are appended to `notes` when given.
std::vector<Policy> CompileForExperiment(const std::vector<Rule>& rules,
                                         const DeviceRegistry& registry,
                                         const ExperimentConfig& config,
                                         std::vector<std::string>* notes = nullptr);

ExperimentResult RunExperiment(const DeviceRegistry& registry, const std::vector<Rule>& rules,
                               const std::vector<Policy>& ups,
                               const std::vector<DataItem>& trace,
                               const ExperimentConfig& config = {});

// Tables in the layout of the evaluation: volumes and reduction per
// attribute, then calls and inconsistencies per rule.
std::string FormatReport(const MetricsReport& report);
std::string ReportToJson(const MetricsReport& report);
std::string CallsToJsonl(const std::vector<MethodCall>& calls);

}  // namespace flowguard

#endif  // FLOWGUARD_EXPERIMENT_H_
