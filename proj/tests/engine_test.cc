#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "flowguard/compiler.h"
#include "flowguard/engine.h"
#include "flowguard/error.h"
#include "flowguard/rule.h"
#include "support.h"

namespace flowguard {
namespace {

using testing::SmallRegistry;

const DeviceRegistry& Heating() {
  static const DeviceRegistry r = DeviceRegistry::FromJson(R"({"devices":[
    {"id":"ps1","attributes":[{"name":"presence","kind":"binary","values":["present","not present"]}]},
    {"id":"ts1","attributes":[{"name":"temperature","kind":"numeric","unit":"F"}]},
    {"id":"f1","attributes":[{"name":"switch","kind":"binary","values":["on","off"],"commandable":true}]}
  ]})");
  return r;
}

std::vector<Policy> HeatingPolicies() {
  std::vector<Policy> out = CompileRule(
      ParseRules("R1: when ps1.presence == present if ts1.temperature > 86 then set f1.switch on",
                 Heating())
          .at(0),
      Heating());
  out.push_back(ParsePolicy(R"(POLICY P0 AP - PRIORITY 0
TRIGGER: {
  match ps1.presence
  satisfy == -> "not present"
  run keep()
}
CHECK: []
)"));
  return out;
}

TEST(Engine, HeatingExampleSendsStandInThenEvent) {
  Engine engine(Heating());
  engine.LoadPolicies(HeatingPolicies());
  Source ps = Source::Parse("ps1.presence"), ts = Source::Parse("ts1.temperature"),
         fan = Source::Parse("f1.switch");
  EXPECT_TRUE(engine.OnEvent({ts, Value(90), 1000}).empty());
  EXPECT_TRUE(engine.OnEvent({fan, Value("off"), 2000}).empty());
  auto away = engine.OnEvent({ps, Value("not present"), 3000});
  ASSERT_EQ(away.size(), 1u);
  EXPECT_EQ(engine.stores().DbStar(ps), Value("not present"));

  auto out = engine.OnEvent({ps, Value("present"), 4000});
  ASSERT_EQ(out.size(), 2u);
  // The condition datum goes first so the platform sees it before the event.
  EXPECT_EQ(out[0].source, ts);
  EXPECT_GT(out[0].value.number(), 86);
  EXPECT_LT(out[0].value.number(), 150);
  EXPECT_EQ(out[0].emit_at, 4000);
  EXPECT_EQ(out[1].source, ps);
  EXPECT_EQ(out[1].value, Value("present"));
  EXPECT_EQ(out[1].emit_at, 4000);
}

TEST(Engine, NoPoliciesMeansNoReports) {
  Engine engine(SmallRegistry());
  std::mt19937_64 rng(3);
  std::vector<Source> sources = SmallRegistry().Sources();
  int64_t t = 0;
  for (int i = 0; i < 300; ++i) {
    const Source& s = sources[rng() % sources.size()];
    if (s.type != SourceType::kDevice) continue;
    t += 1 + static_cast<int64_t>(rng() % 5000);
    Value v = testing::RandomValue(SmallRegistry().Kind(s), rng);
    EXPECT_TRUE(engine.OnEvent({s, v, t}).empty());
  }
  EXPECT_TRUE(engine.OnTick(t + 1000000).empty());
}

// Random policies and events; checks that reports only come from triggered
// policies and that DB* tracks the emitted stream.
TEST(Engine, ReportsAreAccountedForAndDbStarFollowsThem) {
  const DeviceRegistry& reg = SmallRegistry();
  std::vector<Source> sources;
  for (const Source& s : reg.Sources()) {
    if (s.type == SourceType::kDevice) sources.push_back(s);
  }
  for (uint64_t seed = 1; seed <= 40; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<Policy> aps;
    for (int i = 0; i < 6; ++i) {
      aps.push_back(testing::RandomPolicy(reg, rng, "A" + std::to_string(i), Origin::kAutomation));
    }
    Engine engine(reg, EngineConfig{.seed = seed});
    engine.LoadPolicies(aps);
    std::map<std::string, std::set<Source>> allowed;
    for (const Policy& p : aps) {
      allowed[p.id].insert(p.trigger.pattern);
      for (const CheckItem& c : p.check) allowed[p.id].insert(c.fetch);
    }
    std::map<Source, Value> last;
    auto consume = [&](const std::vector<ReportEnvelope>& out) {
      for (const ReportEnvelope& e : out) {
        ASSERT_TRUE(allowed.count(e.policy_id)) << e.policy_id;
        EXPECT_TRUE(allowed[e.policy_id].count(e.source)) << e.source.ToString();
        last[e.source] = e.value;
      }
      for (const auto& [s, v] : last) EXPECT_EQ(engine.stores().DbStar(s), v);
    };
    int64_t t = 0;
    for (int i = 0; i < 200; ++i) {
      const Source& s = sources[rng() % sources.size()];
      t += 1 + static_cast<int64_t>(rng() % 400000);
      consume(engine.OnEvent({s, testing::RandomValue(reg.Kind(s), rng), t}));
    }
    consume(engine.OnTick(t + 4 * 3600000));
  }
}

TEST(Engine, CheckDatumWithheldWhenDbStarAlreadySatisfies) {
  Source ps = Source::Parse("ps1.presence"), ts = Source::Parse("ts1.temperature"),
         fan = Source::Parse("f1.switch");
  std::mt19937_64 rng(11);
  Engine engine(Heating());
  engine.LoadPolicies(HeatingPolicies());
  std::optional<double> star;
  int64_t t = 0;
  int reported = 0;
  for (int i = 0; i < 3000; ++i) {
    t += 1000;
    int pick = static_cast<int>(rng() % 3);
    DataItem item;
    if (pick == 0) item = {ts, Value(static_cast<double>(60 + rng() % 50)), t};
    if (pick == 1) item = {fan, Value(rng() % 2 ? "on" : "off"), t};
    if (pick == 2) item = {ps, Value(rng() % 2 ? "present" : "not present"), t};
    for (const ReportEnvelope& e : engine.OnEvent(item)) {
      if (e.source != ts) continue;
      ++reported;
      EXPECT_FALSE(star && *star > 86) << "at " << e.emit_at;
      star = e.value.number();
    }
  }
  EXPECT_GT(reported, 0);
}

std::vector<Policy> EveningBlock() {
  return ParsePolicies(R"(POLICY U1 UP PRIORITY 1
TRIGGER: {
  match M1.motion
  satisfy in -> {active, inactive}
  run block()
}
CHECK: [
  {
    fetch time
    satisfy inwindow -> 17:00-22:00
    run block()
  }
]
)");
}

TEST(Engine, UserPolicyBlocksInsideItsWindowOnly) {
  Policy ap = ParsePolicy(R"(POLICY A1 AP - PRIORITY 0
TRIGGER: {
  match M1.motion
  satisfy in -> {active, inactive}
  run keep()
}
CHECK: []
)");
  Engine engine(SmallRegistry());
  engine.LoadPolicies({ap}, EveningBlock());
  Source m = Source::Parse("M1.motion");
  const int64_t h = 3600000;
  int64_t day = 0;
  for (int d = 0; d < 3; ++d, day += 24 * h) {
    EXPECT_EQ(engine.OnEvent({m, Value("active"), day + 16 * h + 59 * 60000}).size(), 1u);
    EXPECT_TRUE(engine.OnEvent({m, Value("inactive"), day + 17 * h}).empty());
    EXPECT_TRUE(engine.OnEvent({m, Value("active"), day + 21 * h + 59 * 60000}).empty());
    EXPECT_EQ(engine.OnEvent({m, Value("inactive"), day + 22 * h}).size(), 1u);
  }
  EXPECT_EQ(engine.suppressed(), 6u);
  EXPECT_EQ(engine.policies().front().id, "U1");
}

TEST(Engine, DelayedReportIsCheckedAtItsEmissionTime) {
  // Seen at 16:59:59.950 but emitted at 17:00:00.050, inside the window.
  Policy ap = ParsePolicy(R"(POLICY A1 AP - PRIORITY 0
TRIGGER: {
  match M1.motion
  satisfy == -> active
  run keep() 100
}
CHECK: []
)");
  Engine engine(SmallRegistry());
  engine.LoadPolicies({ap}, EveningBlock());
  int64_t t = 17 * 3600000 - 50;
  EXPECT_TRUE(engine.OnEvent({Source::Parse("M1.motion"), Value("active"), t}).empty());
  EXPECT_TRUE(engine.OnTick(t + 1000).empty());
  EXPECT_EQ(engine.suppressed(), 1u);
}

TEST(OrderPolicies, UsersFirstThenFileOrder) {
  Policy ap1 = HeatingPolicies()[0];
  Policy ap2 = HeatingPolicies()[1];
  Policy up = EveningBlock()[0];
  std::vector<Policy> ordered = OrderPolicies({ap1, ap2}, {up});
  ASSERT_EQ(ordered.size(), 3u);
  EXPECT_EQ(ordered[0].id, "U1");
  EXPECT_EQ(ordered[1].id, ap1.id);
  EXPECT_EQ(ordered[2].id, ap2.id);
  EXPECT_THROW(OrderPolicies({ap1, ap1}, {}), DuplicateId);
  Policy loud = ap1;
  loud.priority = 5;
  EXPECT_THROW(OrderPolicies({loud}, {up}), InvalidPolicy);
}

std::vector<DataItem> RandomTestbedEvents(uint64_t seed, int n) {
  const DeviceRegistry& reg = testing::TestbedRegistry();
  std::vector<Source> sources;
  for (const Source& s : reg.Sources()) {
    if (s.type == SourceType::kDevice) sources.push_back(s);
  }
  std::mt19937_64 rng(seed);
  std::vector<DataItem> out;
  int64_t t = 0;
  for (int i = 0; i < n; ++i) {
    const Source& s = sources[rng() % sources.size()];
    t += 1000 * (1 + static_cast<int64_t>(rng() % 600));
    out.push_back({s, testing::RandomValue(reg.Kind(s), rng), t});
  }
  return out;
}

// (emit_at, source, value) with randomized numbers masked: a shuffled
// policy list draws the samples in another order.
std::multiset<std::string> Masked(const std::vector<ReportEnvelope>& out) {
  std::multiset<std::string> m;
  for (const ReportEnvelope& e : out) {
    m.insert(std::to_string(e.emit_at) + " " + e.source.ToString() + " " +
             (e.value.is_number() ? "#" : e.value.label()));
  }
  return m;
}

TEST(Engine, LoadOrderWithinClassDoesNotChangeOutput) {
  const DeviceRegistry& reg = testing::TestbedRegistry();
  std::vector<Rule> rules = LoadRuleFile(testing::DataPath("testbed.rules"), reg);
  std::vector<Policy> aps = CompileRuleSet(rules, reg).policies;
  std::vector<Policy> ups = LoadPolicyFile(testing::DataPath("ups.policy"));
  std::vector<DataItem> events = RandomTestbedEvents(5, 3000);
  auto replay = [&](std::vector<Policy> a, std::vector<Policy> u) {
    Engine engine(reg);
    engine.LoadPolicies(std::move(a), std::move(u));
    std::vector<ReportEnvelope> out;
    for (const DataItem& item : events) {
      for (auto& e : engine.OnEvent(item)) out.push_back(e);
    }
    for (auto& e : engine.OnTick(events.back().timestamp + 3600000)) out.push_back(e);
    return out;
  };
  auto base = Masked(replay(aps, ups));
  std::mt19937_64 rng(9);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(aps.begin(), aps.end(), rng);
    std::shuffle(ups.begin(), ups.end(), rng);
    EXPECT_EQ(Masked(replay(aps, ups)), base) << "shuffle " << i;
  }
}

TEST(Engine, TimerCallbackAtExactDueTime) {
  const DeviceRegistry& reg = testing::TestbedRegistry();
  Rule lon = ParseRules("LON: when MO1.motion == inactive for 5m then set SL1.switch off", reg).at(0);
  Engine engine(reg);
  engine.LoadPolicies(CompileRule(lon, reg));
  Source mo = Source::Parse("MO1.motion");
  EXPECT_TRUE(engine.OnEvent({mo, Value("inactive"), 0}).empty());
  EXPECT_TRUE(engine.OnTick(299999).empty());
  auto out = engine.OnTick(300000);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].emit_at, 300000);
  EXPECT_EQ(out[0].observed_at, 0);
  EXPECT_EQ(out[0].value, Value("inactive"));
  EXPECT_TRUE(engine.OnTick(1000000).empty());
}

TEST(Engine, EventAtDueTimeCancelsTheTimer) {
  const DeviceRegistry& reg = testing::TestbedRegistry();
  Rule lon = ParseRules("LON: when MO1.motion == inactive for 5m then set SL1.switch off", reg).at(0);
  Engine engine(reg);
  engine.LoadPolicies(CompileRule(lon, reg));
  Source mo = Source::Parse("MO1.motion");
  engine.OnEvent({mo, Value("inactive"), 0});
  EXPECT_TRUE(engine.OnEvent({mo, Value("active"), 300000}).empty());
  EXPECT_TRUE(engine.OnTick(900000).empty());
}

TEST(Engine, RejectsBackwardsTimeAndNonDeviceItems) {
  Engine engine(SmallRegistry());
  Source m = Source::Parse("M1.motion");
  engine.OnEvent({m, Value("active"), 1000});
  EXPECT_THROW(engine.OnEvent({m, Value("inactive"), 999}), Error);
  EXPECT_THROW(engine.OnEvent({Source::TimeOfDay(), Value(3), 2000}), Error);
}

TEST(Engine, PassThroughReportsEverything) {
  Engine engine(SmallRegistry(), EngineConfig{.pass_through = true});
  engine.LoadPolicies({}, EveningBlock());
  auto out = engine.OnEvent({Source::Parse("M1.motion"), Value("active"), 18 * 3600000});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].value, Value("active"));
}

TEST(EngineConfig, ParsesAndRejects) {
  EngineConfig c = EngineConfig::LoadFile(testing::DataPath("engine.json"));
  EXPECT_EQ(c.diff_keep_delay_ms, 100);
  EXPECT_EQ(c.tick_ms, 1000);
  EXPECT_THROW(EngineConfig::FromJson("{\"diff_keep_delay_ms\": 0}"), Error);
  EXPECT_THROW(EngineConfig::FromJson("{\"seed\": \"x\"}"), ParseError);
  EXPECT_THROW(EngineConfig::FromJson("[1,"), ParseError);
}

TEST(EngineLoop, MatchesDirectReplay) {
  const DeviceRegistry& reg = testing::TestbedRegistry();
  std::vector<Rule> rules = LoadRuleFile(testing::DataPath("testbed.rules"), reg);
  std::vector<Policy> aps = CompileRuleSet(rules, reg).policies;
  std::vector<DataItem> events = RandomTestbedEvents(21, 1500);

  Engine direct(reg);
  direct.LoadPolicies(aps);
  std::vector<ReportEnvelope> expected;
  for (const DataItem& item : events) {
    for (auto& e : direct.OnEvent(item)) expected.push_back(e);
  }
  for (auto& e : direct.OnTick(events.back().timestamp + 3600000)) expected.push_back(e);

  Engine looped(reg);
  looped.LoadPolicies(aps);
  std::vector<ReportEnvelope> got;
  {
    EngineLoop loop(&looped, [&](const ReportEnvelope& e) { got.push_back(e); });
    std::thread producer([&] {
      for (const DataItem& item : events) loop.Submit(item);
      loop.Tick(events.back().timestamp + 3600000);
    });
    producer.join();
    loop.Drain();
    EXPECT_FALSE(loop.error());
  }
  EXPECT_EQ(got, expected);
}

TEST(EngineLoop, SurfacesEngineErrors) {
  Engine engine(SmallRegistry());
  EngineLoop loop(&engine, [](const ReportEnvelope&) {});
  Source m = Source::Parse("M1.motion");
  loop.Submit({m, Value("active"), 1000});
  loop.Submit({m, Value("active"), 10});
  loop.Drain();
  ASSERT_TRUE(loop.error());
  EXPECT_NE(loop.error()->find("arrives after"), std::string::npos);
}

}  // namespace
}  // namespace flowguard
