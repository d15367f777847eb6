// Device traces: JSON lines I/O and a synthetic workload generator.
//
// One item per line: {"t": 1000, "src": "MO1.motion", "v": "active"}.

#ifndef FLOWGUARD_TRACE_H_
#define FLOWGUARD_TRACE_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "flowguard/model.h"
#include "flowguard/registry.h"
#include "flowguard/rule.h"

namespace flowguard {

struct Trace {
  std::vector<DataItem> items;  // strictly increasing timestamps
  uint64_t seed = 0;
};

void WriteTrace(std::ostream& out, const std::vector<DataItem>& items);
// Throws ParseError with the line number, or KindMismatch for values that
// do not fit the registry.
std::vector<DataItem> ReadTrace(std::istream& in, const DeviceRegistry& registry);
std::vector<DataItem> LoadTraceFile(const std::string& path, const DeviceRegistry& registry);

// Generator parameters. Every channel produces events as a Poisson process
// with `count` expected events over the whole duration.
//
// binary: the value alternates; `first_share` is the expected fraction of
//   time spent in the first label, which sets the two mean dwell times.
// numeric models:
//   "revert"   mean-reverting walk around `mean` with step `sigma`
//   "daylight" sine over the day peaking at `peak` around 13:00, `floor` at
//              night, multiplicative noise `sigma`
//   "spiky"    walk around `mean`; with probability `spike_p` a reading
//              jumps to [spike_lo, spike_hi] and decays back
//   "load"     0 while `follows` is off, else uniform in [lo, hi]
// For actuators `count` is the number of manual toggles. They also follow
// `rules`: a platform runs them during generation and each call changes
// the target one second later.
struct ChannelParams {
  double count = 0;
  double first_share = 0.5;
  std::string model;
  double mean = 0;
  double sigma = 1;
  double theta = 0.3;  // revert: pull toward the mean per reading
  double peak = 0;
  double floor = 0;
  double spike_p = 0;
  double spike_lo = 0;
  double spike_hi = 0;
  double lo = 0;
  double hi = 0;
  std::string follows;
  // Binary: a share of the dwells in the second label are long ones with
  // this mean; the short mean is lowered so `count` still holds.
  double long_share = 0;
  double long_mean_s = 0;
  // Binary: while none of these presence sensors reads its first label,
  // changes into the first label are kept with probability away_factor.
  std::vector<Source> occupancy;
  double away_factor = 1;
};

struct WorkloadParams {
  double days = 10;
  std::map<Source, ChannelParams> channels;

  // Throws Error for unknown sources, unknown models or rates <= 0.
  static WorkloadParams FromJson(std::string_view text, const DeviceRegistry& registry);
  static WorkloadParams LoadFile(const std::string& path, const DeviceRegistry& registry);
};

// Deterministic for a given seed. Starts at midnight with one reading of
// every attribute, actuators first; timestamps are whole seconds.
Trace GenerateTrace(const DeviceRegistry& registry, const WorkloadParams& params,
                    const std::vector<Rule>& rules, uint64_t seed);

}  // namespace flowguard

#endif  // FLOWGUARD_TRACE_H_
