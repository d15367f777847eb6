#include <gtest/gtest.h>

#include <chrono>
#include <condition_variable>
#include <random>
#include <set>

#include "flowguard/engine.h"
#include "flowguard/error.h"
#include "flowguard/mediator.h"
#include "flowguard/mqtt.h"
#include "support.h"

namespace flowguard {
namespace {

using testing::TestbedRegistry;

DeviceDescriptor Descriptor(const std::string& id, const std::string& json_attrs) {
  DeviceRegistry r = DeviceRegistry::FromJson(R"({"devices":[{"id":")" + id +
                                              R"(","attributes":)" + json_attrs + "}]}");
  return r.devices().at(0);
}

TEST(Mediator, TopicsFollowTheScheme) {
  Mediator m(TestbedRegistry(), nullptr, nullptr);
  VirtualDevice sensor = m.RegisterDevice(Descriptor("MS", R"([
      {"name":"motion","kind":"binary","values":["active","inactive"]},
      {"name":"temperature","kind":"numeric"}])"));
  EXPECT_EQ(sensor.data_topics.size(), 2u);
  EXPECT_TRUE(sensor.command_topics.empty());
  EXPECT_EQ(sensor.data_topics.at("motion"), "data/" + sensor.upstream_id + "/motion");

  VirtualDevice outlet = m.RegisterDevice(Descriptor("OUT", R"([
      {"name":"switch","kind":"binary","values":["on","off"],"commandable":true},
      {"name":"power","kind":"numeric"}])"));
  EXPECT_EQ(outlet.data_topics.size(), 2u);
  ASSERT_EQ(outlet.command_topics.size(), 1u);
  EXPECT_EQ(outlet.command_topics.at("switch"), "cmd/" + outlet.upstream_id + "/switch");
  EXPECT_NE(sensor.upstream_id, outlet.upstream_id);
  EXPECT_NE(sensor.upstream_id, "MS");
  EXPECT_THROW(m.RegisterDevice(Descriptor("MS", "[]")), DuplicateId);
}

TEST(Mediator, FiftyDevicesGetDistinctIdsAndTopics) {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Mediator m(TestbedRegistry(), nullptr, nullptr, {.seed = seed});
    std::set<std::string> ids, topics;
    for (int i = 0; i < 50; ++i) {
      VirtualDevice vd = m.RegisterDevice(Descriptor("D" + std::to_string(i), R"([
          {"name":"switch","kind":"binary","values":["on","off"],"commandable":true},
          {"name":"power","kind":"numeric"}])"));
      EXPECT_TRUE(ids.insert(vd.upstream_id).second);
      for (const auto& [a, t] : vd.data_topics) EXPECT_TRUE(topics.insert(t).second);
      for (const auto& [a, t] : vd.command_topics) EXPECT_TRUE(topics.insert(t).second);
    }
  }
}

TEST(Mediator, PublishesEnvelopeOnDataTopic) {
  SimBus bus;
  Mediator m(TestbedRegistry(), nullptr, &bus, {.stamp_payload = false});
  m.RegisterAll();
  const VirtualDevice* sp1 = m.Find("SP1");
  ASSERT_TRUE(sp1);
  WireMessage w = m.PublishUpstream({Source::Parse("SP1.presence"), Value("present"), 42, 40, "P"});
  EXPECT_EQ(w.topic, "data/" + sp1->upstream_id + "/presence");
  EXPECT_EQ(w.payload, "present");
  EXPECT_EQ(w.at, 42);
  ASSERT_EQ(bus.log().size(), 1u);
  EXPECT_EQ(bus.log()[0], w);
  EXPECT_EQ(m.SourceOfTopic(w.topic), Source::Parse("SP1.presence"));
  EXPECT_THROW(m.PublishUpstream({Source::Parse("XX.presence"), Value("present"), 1, 1, "P"}),
               UnknownSource);

  Mediator stamped(TestbedRegistry(), nullptr, nullptr);
  stamped.RegisterAll();
  EXPECT_EQ(
      stamped.PublishUpstream({Source::Parse("SP1.presence"), Value("present"), 42, 40, "P"})
          .payload,
      "present@40");
}

TEST(Mediator, BlockedDataNeverReachesTheWire) {
  SimBus bus;
  Engine engine(TestbedRegistry());  // no policies: everything denied
  Mediator m(TestbedRegistry(), &engine, &bus);
  m.RegisterAll();
  for (int i = 0; i < 100; ++i) {
    m.Ingest({Source::Parse("MO1.motion"), Value(i % 2 ? "active" : "inactive"), 2000 * i});
  }
  m.Tick(1000000);
  EXPECT_TRUE(bus.log().empty());
}

TEST(Mediator, ThousandEnvelopesThousandMessagesInOrder) {
  const DeviceRegistry& reg = TestbedRegistry();
  SimBus bus;
  Engine engine(reg, EngineConfig{.pass_through = true});
  Mediator m(reg, &engine, &bus);
  m.RegisterAll();
  std::vector<Source> sources;
  for (const Source& s : reg.Sources()) {
    if (s.type == SourceType::kDevice) sources.push_back(s);
  }
  std::mt19937_64 rng(5);
  std::map<std::string, std::vector<std::string>> sent;
  for (int i = 0; i < 1000; ++i) {
    const Source& s = sources[rng() % sources.size()];
    Value v = testing::RandomValue(reg.Kind(s), rng);
    int64_t t = 1000 * (i + 1);
    auto out = m.Ingest({s, v, t});
    ASSERT_EQ(out.size(), 1u);
    sent[m.Find(s.subject)->data_topics.at(s.attribute)].push_back(EncodePayload(v, t));
  }
  ASSERT_EQ(bus.log().size(), 1000u);
  std::map<std::string, std::vector<std::string>> seen;
  for (const WireMessage& w : bus.log()) seen[w.topic].push_back(w.payload);
  EXPECT_EQ(seen, sent);
}

TEST(Mediator, CollapsesRepeatsWithinASecond) {
  SimBus bus;
  Engine engine(TestbedRegistry(), EngineConfig{.pass_through = true});
  Mediator m(TestbedRegistry(), &engine, &bus);
  m.RegisterAll();
  Source s = Source::Parse("MU1.contact");
  EXPECT_EQ(m.Ingest({s, Value("open"), 0}).size(), 1u);
  EXPECT_TRUE(m.Ingest({s, Value("open"), 999}).empty());
  EXPECT_EQ(m.Ingest({s, Value("open"), 1000}).size(), 1u);
  EXPECT_EQ(m.Ingest({s, Value("closed"), 1001}).size(), 1u);
  EXPECT_EQ(m.collapsed(), 1u);
  EXPECT_THROW(m.Ingest({Source::Parse("XX.contact"), Value("open"), 2000}), UnknownSource);
}

TEST(Mediator, RelaysCommandsVerbatim) {
  SimBus bus;
  Mediator m(TestbedRegistry(), nullptr, &bus);
  m.RegisterAll();
  std::vector<DeviceCommand> got;
  m.SetCommandSink([&](const DeviceCommand& c) { got.push_back(c); });
  m.SubscribeCommands();
  const std::string topic = m.Find("OL1")->command_topics.at("switch");
  bus.Publish({topic, "on", 1});
  bus.Publish({topic, " o\xffn@7 ", 2});
  bus.Publish({"cmd/nobody/switch", "on", 3});
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].device, "OL1");
  EXPECT_EQ(got[0].attribute, "switch");
  EXPECT_EQ(got[0].payload, "on");
  EXPECT_EQ(got[1].payload, " o\xffn@7 ");
  EXPECT_EQ(m.dropped_commands(), 1u);
}

TEST(Mediator, FuzzedTopicsOnlyForwardExactMatches) {
  Mediator m(TestbedRegistry(), nullptr, nullptr);
  m.RegisterAll();
  std::vector<std::string> valid;
  for (const auto& [id, vd] : m.devices()) {
    for (const auto& [a, t] : vd.command_topics) valid.push_back(t);
  }
  ASSERT_FALSE(valid.empty());
  std::mt19937_64 rng(77);
  const std::string alphabet = "cmdata/+#0123456789abcdefswitchSL1";
  uint64_t forwarded = 0, expected = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string topic;
    switch (rng() % 4) {
      case 0: topic = valid[rng() % valid.size()]; break;
      case 1: {
        topic = valid[rng() % valid.size()];
        topic[rng() % topic.size()] = alphabet[rng() % alphabet.size()];
        break;
      }
      case 2: {
        const VirtualDevice& vd = m.devices().begin()->second;
        topic = vd.data_topics.begin()->second;
        break;
      }
      default:
        for (int k = 0, n = 1 + rng() % 30; k < n; ++k) topic += alphabet[rng() % alphabet.size()];
    }
    bool registered = std::find(valid.begin(), valid.end(), topic) != valid.end();
    expected += registered;
    auto cmd = m.RelayCommand(topic, "on");
    forwarded += cmd.has_value();
    EXPECT_EQ(cmd.has_value(), registered) << topic;
  }
  EXPECT_EQ(forwarded, expected);
  EXPECT_EQ(m.dropped_commands(), 10000 - expected);
}

TEST(Payload, RoundTrips) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    Value v = rng() % 2 ? Value(static_cast<double>(static_cast<int64_t>(rng() % 200000) - 50000) / 4)
                        : Value(std::string(1 + rng() % 3, "abc d"[rng() % 5]) + "x");
    std::optional<int64_t> stamp;
    if (rng() % 2) stamp = static_cast<int64_t>(rng() % 1000000000);
    auto [back, s] = DecodePayload(EncodePayload(v, stamp));
    EXPECT_EQ(back, v);
    EXPECT_EQ(s, stamp);
  }
  EXPECT_EQ(DecodePayload("a@b").first, Value("a@b"));
}

TEST(Topics, WildcardMatching) {
  EXPECT_TRUE(TopicMatches("data/#", "data/x/motion"));
  EXPECT_TRUE(TopicMatches("cmd/+/+", "cmd/x/switch"));
  EXPECT_FALSE(TopicMatches("cmd/+/+", "cmd/x"));
  EXPECT_FALSE(TopicMatches("cmd/+/+", "cmd/x/switch/extra"));
  EXPECT_FALSE(TopicMatches("cmd/+", "data/x"));
  EXPECT_TRUE(TopicMatches("a/b", "a/b"));
}

TEST(Mqtt, PacketEncoding) {
  EXPECT_EQ(mqtt::EncodeRemainingLength(0), std::string(1, '\0'));
  EXPECT_EQ(mqtt::EncodeRemainingLength(127), "\x7f");
  EXPECT_EQ(mqtt::EncodeRemainingLength(128), std::string("\x80\x01", 2));
  EXPECT_EQ(mqtt::EncodeRemainingLength(16383), "\xff\x7f");
  EXPECT_EQ(mqtt::EncodeString("ab"), std::string("\0\x02" "ab", 4));
  std::string p = mqtt::PublishPacket("t", "v");
  EXPECT_EQ(p, std::string("\x30\x04\0\x01tv", 6));
}

TEST(Mqtt, LoopbackDelivery) {
  LoopbackBroker broker;
  MqttOptions o;
  o.port = broker.port();
  o.client_id = "sub";
  MqttClient sub(o);
  std::mutex mu;
  std::condition_variable cv;
  std::vector<WireMessage> got;
  sub.Subscribe("data/#", [&](const WireMessage& m) {
    std::lock_guard<std::mutex> lock(mu);
    got.push_back(m);
    cv.notify_all();
  });
  o.client_id = "pub";
  MqttClient pub(o);
  Mediator m(TestbedRegistry(), nullptr, &pub, {.stamp_payload = false});
  m.RegisterAll();
  // The subscription is in place once a probe comes back.
  {
    std::unique_lock<std::mutex> lock(mu);
    for (int i = 0; i < 50 && got.empty(); ++i) {
      lock.unlock();
      pub.Publish({"data/probe/x", "p", 0});
      lock.lock();
      cv.wait_for(lock, std::chrono::milliseconds(100), [&] { return !got.empty(); });
    }
    ASSERT_FALSE(got.empty());
    got.clear();
  }
  for (int i = 0; i < 20; ++i) {
    m.PublishUpstream({Source::Parse("MO1.motion"), Value(i % 2 ? "active" : "inactive"), i, i, ""});
  }
  std::unique_lock<std::mutex> lock(mu);
  cv.wait_for(lock, std::chrono::seconds(5), [&] {
    size_t n = 0;
    for (const auto& w : got) n += w.topic != "data/probe/x";
    return n >= 20;
  });
  std::vector<std::string> payloads;
  for (const auto& w : got) {
    if (w.topic == "data/probe/x") continue;
    EXPECT_EQ(w.topic, m.Find("MO1")->data_topics.at("motion"));
    payloads.push_back(w.payload);
  }
  ASSERT_EQ(payloads.size(), 20u);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(payloads[i], i % 2 ? "active" : "inactive");
}

}  // namespace
}  // namespace flowguard
