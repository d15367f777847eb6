// The layer between real devices and the automation platform.
//
// Each real device gets a virtual device with a random upstream id. Device
// readings enter through Ingest, pass the engine, and leave as messages on
// data/{id}/{attribute}. Commands from the platform arrive on
// cmd/{id}/{attribute} and are relayed unchanged to the real device;
// anything else is dropped.

#ifndef FLOWGUARD_MEDIATOR_H_
#define FLOWGUARD_MEDIATOR_H_

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowguard/engine.h"
#include "flowguard/model.h"
#include "flowguard/registry.h"

namespace flowguard {

struct VirtualDevice {
  std::string real_id;
  std::string upstream_id;
  std::map<std::string, std::string> data_topics;     // attribute -> topic
  std::map<std::string, std::string> command_topics;  // commandable attributes
};

struct WireMessage {
  std::string topic;
  std::string payload;
  int64_t at = 0;  // logical emission time

  bool operator==(const WireMessage&) const = default;
};

// "value@ms" when `observed` is set, else "value".
std::string EncodePayload(const Value& value, std::optional<int64_t> observed);
// Splits off a trailing "@<digits>". Numbers parse as numbers.
std::pair<Value, std::optional<int64_t>> DecodePayload(std::string_view payload);

// MQTT-style filter match with '+' (one level) and '#' (the rest).
bool TopicMatches(std::string_view filter, std::string_view topic);

class UpstreamTransport {
 public:
  using Handler = std::function<void(const WireMessage&)>;
  virtual ~UpstreamTransport() = default;
  virtual void Publish(const WireMessage& message) = 0;
  virtual void Subscribe(const std::string& filter, Handler handler) = 0;
};

// In-process bus. Delivery is synchronous, in publish order.
class SimBus : public UpstreamTransport {
 public:
  void Publish(const WireMessage& message) override;
  void Subscribe(const std::string& filter, Handler handler) override;
  const std::vector<WireMessage>& log() const { return log_; }
  void set_logging(bool on) { logging_ = on; }

 private:
  std::vector<std::pair<std::string, Handler>> subscribers_;
  std::vector<WireMessage> log_;
  bool logging_ = true;
};

struct DeviceCommand {
  std::string device;
  std::string attribute;
  std::string payload;
};

struct MediatorOptions {
  // Append "@observed" to every data payload.
  bool stamp_payload = true;
  // Identical (source, value) readings closer than this are collapsed.
  int64_t dedup_window_ms = 1000;
  uint64_t seed = 1;
};

class Mediator {
 public:
  using CommandSink = std::function<void(const DeviceCommand&)>;

  Mediator(const DeviceRegistry& registry, Engine* engine, UpstreamTransport* upstream,
           MediatorOptions options = {});

  // Throws DuplicateId when the device is already registered.
  VirtualDevice RegisterDevice(const DeviceDescriptor& device);
  void RegisterAll();
  void SetCommandSink(CommandSink sink) { command_sink_ = std::move(sink); }
  // Subscribes to cmd/+/+ upstream and relays what arrives.
  void SubscribeCommands();

  // Device-side entry point; the item's timestamp is the ingest time.
  // Returns the messages published upstream as a result.
  std::vector<WireMessage> Ingest(const DataItem& item);
  std::vector<WireMessage> Tick(int64_t now);

  // Throws UnknownSource for sources without a virtual device.
  WireMessage PublishUpstream(const ReportEnvelope& envelope);
  // Forwards a platform command to the real device. Unknown topics are
  // dropped and counted.
  std::optional<DeviceCommand> RelayCommand(const std::string& topic, const std::string& payload);

  const VirtualDevice* Find(const std::string& real_id) const;
  // Reverse lookup of a data topic.
  std::optional<Source> SourceOfTopic(const std::string& topic) const;
  const std::map<std::string, VirtualDevice>& devices() const { return devices_; }
  uint64_t dropped_commands() const { return dropped_; }
  uint64_t collapsed() const { return collapsed_; }

 private:
  std::vector<WireMessage> PublishAll(const std::vector<ReportEnvelope>& envelopes);
  std::string FreshId();

  const DeviceRegistry& registry_;
  Engine* engine_;
  UpstreamTransport* upstream_;
  MediatorOptions options_;
  std::mt19937_64 rng_;
  CommandSink command_sink_;
  std::map<std::string, VirtualDevice> devices_;  // by real id
  std::map<std::string, Source> data_index_;      // topic -> source
  std::map<std::string, std::pair<std::string, std::string>> command_index_;
  std::map<Source, DataItem> last_seen_;
  mutable std::mutex mu_;
  uint64_t dropped_ = 0;
  uint64_t collapsed_ = 0;
};

}  // namespace flowguard

#endif  // FLOWGUARD_MEDIATOR_H_
