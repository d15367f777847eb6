#include <gtest/gtest.h>

#include <random>

#include "flowguard/error.h"
#include "flowguard/policy.h"
#include "flowguard/rule.h"
#include "support.h"

namespace flowguard {
namespace {

using testing::SmallRegistry;
using testing::TestbedRegistry;

constexpr char kHeating[] = R"(
# Turn the heater on when someone arrives and it is cold.
POLICY AP-R1 AP R1 PRIORITY 0
TRIGGER: {
  match device.SP1.presence
  satisfy == -> present
  fetch1 device.SP1.presence
  branch == -> present
  run diffKeep()
  else keep()
}
CHECK: [
  {
    fetch device.MU1.temperature
    satisfy < -> 86
    fetch1 device.MU1.temperature
    branch < -> 86
    run block()
    else randomize(-50, 86)
  },
  {
    fetch device.OL1.switch
    satisfy != -> on
    run block()
  }
]
)";

TEST(PolicyText, ParsesListingShape) {
  Policy p = ParsePolicy(kHeating);
  EXPECT_EQ(p.id, "AP-R1");
  EXPECT_EQ(p.rule_id, "R1");
  EXPECT_EQ(p.origin, Origin::kAutomation);
  EXPECT_EQ(p.trigger.pattern, Source::Parse("SP1.presence"));
  EXPECT_EQ(p.trigger.run.method, Method::kDiffKeep);
  ASSERT_EQ(p.check.size(), 2u);
  EXPECT_EQ(p.check[0].else_->method, Method::kRandomize);
  EXPECT_EQ(p.check[0].else_->lo, -50);
  EXPECT_EQ(p.check[0].else_->hi, 86);
  EXPECT_NO_THROW(ValidatePolicy(p, TestbedRegistry()));
}

TEST(PolicyText, RoundTripsRandomPolicies) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    Origin origin = i % 3 ? Origin::kAutomation : Origin::kUser;
    Policy p = testing::RandomPolicy(SmallRegistry(), rng, "P" + std::to_string(i), origin);
    std::string text = SerializePolicy(p);
    Policy back = ParsePolicy(text);
    EXPECT_EQ(back, p) << text;
    EXPECT_EQ(SerializePolicy(back), text);
  }
}

TEST(PolicyText, ReportsPosition) {
  try {
    ParsePolicy("POLICY X AP - PRIORITY 0\nTRIGGER: {\n  match device.SP1.presence\n"
                "  satisfy == -> present\n  run frobnicate()\n}\nCHECK: []\n");
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5);
  }
  EXPECT_THROW(ParsePolicy("POLICY X AP - PRIORITY 0\nTRIGGER: {"), ParseError);
}

TEST(PolicyValidation, RejectsMismatches) {
  Policy p = ParsePolicy(kHeating);
  const DeviceRegistry& r = TestbedRegistry();
  Policy bad = p;
  bad.check[1].run = Action::DiffKeep();  // fine: switch is binary
  EXPECT_NO_THROW(ValidatePolicy(bad, r));
  bad = p;
  bad.check[0].run = Action::DiffKeep();
  EXPECT_THROW(ValidatePolicy(bad, r), InvalidPolicy);
  bad = p;
  bad.check[0].else_ = Action::Randomize(-60, 86);
  EXPECT_THROW(ValidatePolicy(bad, r), InvalidPolicy);
  bad = p;
  bad.check[0].else_ = Action::Keep(100);
  EXPECT_THROW(ValidatePolicy(bad, r), InvalidPolicy);
  bad = p;
  bad.trigger.branch.reset();
  EXPECT_THROW(ValidatePolicy(bad, r), InvalidPolicy);
  bad = p;
  bad.trigger.constraint = Constraint::Compare(Op::kLt, Value(3));
  EXPECT_THROW(ValidatePolicy(bad, r), InvalidPolicy);
  bad = p;
  bad.check.push_back({Source::TimeOfDay(), Constraint::Within(TimeWindow::Parse("08:00-09:00")),
                       std::nullopt, std::nullopt, Action::Keep(), std::nullopt});
  EXPECT_THROW(ValidatePolicy(bad, r), InvalidPolicy);
}

TEST(Methods, TableOneShapes) {
  std::mt19937_64 rng(1);
  AttributeKind presence = AttributeKind::Binary("present", "not present");
  AttributeKind temp = AttributeKind::Numeric("F", -50, 150);
  AttributeKind mode = AttributeKind::Enumerated({"home", "away", "night"});
  EXPECT_EQ(ApplyMethod(Action::Keep(5), Value("present"), presence, rng),
            (std::vector<Emission>{{Value("present"), 5}}));
  EXPECT_TRUE(ApplyMethod(Action::Block(), Value(70), temp, rng).empty());
  EXPECT_EQ(ApplyMethod(Action::DiffKeep(), Value("present"), presence, rng, 250),
            (std::vector<Emission>{{Value("not present"), 0}, {Value("present"), 250}}));
  EXPECT_THROW(ApplyMethod(Action::DiffKeep(), Value(70), temp, rng), KindMismatch);
  EXPECT_THROW(ApplyMethod(Action::Randomize(1, 2), Value("home"), mode, rng), KindMismatch);
  EXPECT_THROW(ApplyMethod(Action::Randomize(5, 5), Value(70), temp, rng), InvalidPolicy);
  for (int i = 0; i < 200; ++i) {
    auto e = ApplyMethod(Action::PickOther({"home", "away", "night"}), Value("home"), mode, rng);
    ASSERT_EQ(e.size(), 1u);
    EXPECT_NE(e[0].value, Value("home"));
  }
  EXPECT_THROW(ApplyMethod(Action::PickOther({"away", "night"}, "home"), Value("home"), mode, rng),
               InvalidPolicy);
}

TEST(Rules, ParseCorpus) {
  std::vector<Rule> rules = LoadRuleFile(testing::DataPath("testbed.rules"), TestbedRegistry());
  EXPECT_EQ(rules.size(), 17u);
  const Rule& lon = rules[1];
  EXPECT_EQ(lon.id, "LON");
  EXPECT_EQ(lon.sustained_for, 300000);
  EXPECT_EQ(lon.actions.at(0), Command::Set(Source::Parse("SL1.switch"), Value("off")));
  const Rule& stn = rules[5];
  EXPECT_EQ(stn.conditions.size(), 4u);
  EXPECT_EQ(stn.actions.at(0).kind, Command::Kind::kNotify);
}

TEST(Rules, TextAndJsonRoundTrip) {
  const DeviceRegistry& r = TestbedRegistry();
  std::vector<Rule> rules = LoadRuleFile(testing::DataPath("testbed.rules"), r);
  EXPECT_EQ(ParseRules(SerializeRules(rules), r), rules);
  EXPECT_EQ(ParseRules(RulesToJson(rules), r), rules);
}

TEST(Rules, RejectsUnknownAndMistyped) {
  const DeviceRegistry& r = TestbedRegistry();
  EXPECT_THROW(ParseRules("X: when MO9.motion == active then notify \"x\"", r), UnknownSource);
  EXPECT_THROW(ParseRules("X: when MO1.motion == open then notify \"x\"", r), KindMismatch);
  EXPECT_THROW(ParseRules("X: when MO1.motion == active then set MO1.temperature 5", r),
               KindMismatch);
  EXPECT_THROW(ParseRules("X: when MO1.motion == active", r), ParseError);
  EXPECT_THROW(ParseRules("X: when MO1.motion == active then notify \"a\"\n"
                          "X: when MO1.motion == inactive then notify \"b\"",
                          r),
               DuplicateId);
}

TEST(Durations, ParseAndFormat) {
  EXPECT_EQ(ParseDuration("5m"), 300000);
  EXPECT_EQ(ParseDuration("60m"), 3600000);
  EXPECT_EQ(ParseDuration("30s"), 30000);
  EXPECT_EQ(ParseDuration("2h"), 7200000);
  EXPECT_EQ(FormatDuration(300000), "5m");
  EXPECT_THROW(ParseDuration("5 parsecs"), ParseError);
}

}  // namespace
}  // namespace flowguard
