#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "flowguard/error.h"
#include "flowguard/trace.h"
#include "support.h"

namespace flowguard {
namespace {

using testing::SmallRegistry;

constexpr char kWorkload[] = R"({
  "days": 2,
  "channels": {
    "D1.contact": {"count": 200, "first_share": 0.5},
    "D1.temperature": {"count": 150, "model": "revert", "mean": 5, "sigma": 1},
    "M1.motion": {"count": 400, "first_share": 0.5},
    "M1.illuminance": {"count": 120, "model": "daylight", "peak": 7, "floor": 0.5, "sigma": 0.1},
    "L1.switch": {"count": 30, "first_share": 0.5}
  }
})";

WorkloadParams Params() { return WorkloadParams::FromJson(kWorkload, SmallRegistry()); }

TEST(GenerateTrace, SameSeedSameTrace) {
  Trace a = GenerateTrace(SmallRegistry(), Params(), {}, 7);
  Trace b = GenerateTrace(SmallRegistry(), Params(), {}, 7);
  Trace c = GenerateTrace(SmallRegistry(), Params(), {}, 8);
  EXPECT_EQ(a.items, b.items);
  EXPECT_NE(a.items, c.items);
}

TEST(GenerateTrace, OrderedAlternatingAndInBounds) {
  const DeviceRegistry& reg = SmallRegistry();
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Trace t = GenerateTrace(reg, Params(), {}, seed);
    std::map<Source, Value> last;
    for (size_t i = 0; i < t.items.size(); ++i) {
      const DataItem& d = t.items[i];
      if (i) EXPECT_LT(t.items[i - 1].timestamp, d.timestamp);
      EXPECT_EQ(d.timestamp % 1000, 0);
      const AttributeKind& k = reg.Kind(d.source);
      if (k.kind == ValueKind::kBinary) {
        auto it = last.find(d.source);
        if (it != last.end()) EXPECT_NE(it->second, d.value) << d.source.ToString();
      } else if (k.kind == ValueKind::kNumeric) {
        EXPECT_GE(d.value.number(), k.min);
        EXPECT_LE(d.value.number(), k.max);
      }
      last[d.source] = d.value;
    }
  }
}

TEST(GenerateTrace, CountsFollowTheRates) {
  WorkloadParams p = Params();
  std::map<Source, std::vector<double>> counts;
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    Trace t = GenerateTrace(SmallRegistry(), p, {}, seed);
    std::map<Source, double> n;
    for (const DataItem& d : t.items) {
      if (d.timestamp > 0) n[d.source] += 1;  // the midnight snapshot is extra
    }
    for (const auto& [s, ch] : p.channels) counts[s].push_back(n[s]);
  }
  for (const auto& [s, ch] : p.channels) {
    double sigma = std::sqrt(ch.count);
    int inside = 0;
    double mean = 0;
    for (double c : counts[s]) {
      inside += std::abs(c - ch.count) <= 3 * sigma;
      mean += c / counts[s].size();
    }
    EXPECT_GE(inside, 48) << s.ToString();
    EXPECT_LE(std::abs(mean - ch.count), 3 * sigma / std::sqrt(50.0)) << s.ToString();
  }
}

TEST(GenerateTrace, StartsWithASnapshot) {
  Trace t = GenerateTrace(SmallRegistry(), Params(), {}, 3);
  std::set<Source> at_zero;
  for (const DataItem& d : t.items) {
    if (d.timestamp < 1000 * 60) at_zero.insert(d.source);
  }
  for (const auto& [s, ch] : Params().channels) EXPECT_TRUE(at_zero.count(s)) << s.ToString();
}

TEST(TraceIo, RoundTripsAndReportsLines) {
  const DeviceRegistry& reg = SmallRegistry();
  Trace t = GenerateTrace(reg, Params(), {}, 4);
  std::stringstream buf;
  WriteTrace(buf, t.items);
  std::istringstream in(buf.str());
  EXPECT_EQ(ReadTrace(in, reg), t.items);

  std::istringstream bad("{\"t\":1,\"src\":\"M1.motion\",\"v\":\"active\"}\n{\"t\":2,\"src\":");
  try {
    ReadTrace(bad, reg);
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
  std::istringstream back("{\"t\":5,\"src\":\"M1.motion\",\"v\":\"active\"}\n"
                          "{\"t\":5,\"src\":\"M1.motion\",\"v\":\"inactive\"}\n");
  EXPECT_THROW(ReadTrace(back, reg), ParseError);
  std::istringstream wrong("{\"t\":5,\"src\":\"M1.motion\",\"v\":\"open\"}\n");
  EXPECT_THROW(ReadTrace(wrong, reg), KindMismatch);
}

TEST(Workload, Validation) {
  const DeviceRegistry& reg = SmallRegistry();
  auto bad = [&](const std::string& channels) {
    return [&reg, channels] {
      WorkloadParams::FromJson("{\"days\": 1, \"channels\": {" + channels + "}}", reg);
    };
  };
  EXPECT_THROW(bad(R"("X9.motion": {"count": 3})")(), Error);
  EXPECT_THROW(bad(R"("M1.motion": {"count": 0})")(), Error);
  EXPECT_THROW(bad(R"("M1.motion": {"count": 3, "first_share": 1})")(), Error);
  EXPECT_THROW(bad(R"("M1.illuminance": {"count": 3, "model": "chaos"})")(), Error);
  EXPECT_THROW(bad(R"("H1.mode": {"count": 3})")(), Error);
  EXPECT_THROW(bad(R"("M1.motion": {"count": 3, "long_share": 1})")(), Error);
  EXPECT_THROW(bad(R"("M1.motion": {"count": 3, "away_factor": 2, "occupancy": ["D1.contact"]})")(),
               Error);
  EXPECT_THROW(bad(R"("M1.motion": {"count": 3, "occupancy": ["D1.temperature"]})")(), Error);
  EXPECT_THROW(WorkloadParams::FromJson(R"({"days": 0, "channels": {}})", reg), Error);
  EXPECT_NO_THROW(WorkloadParams::LoadFile(testing::DataPath("workload.json"),
                                           testing::TestbedRegistry()));
}

}  // namespace
}  // namespace flowguard
