#include "flowguard/mediator.h"

#include <charconv>
#include <cstdlib>

#include "flowguard/error.h"

namespace flowguard {

std::string EncodePayload(const Value& value, std::optional<int64_t> observed) {
  std::string out = value.ToString();
  if (observed) out += "@" + std::to_string(*observed);
  return out;
}

std::pair<Value, std::optional<int64_t>> DecodePayload(std::string_view payload) {
  std::optional<int64_t> stamp;
  size_t at = payload.rfind('@');
  if (at != std::string_view::npos && at + 1 < payload.size()) {
    std::string_view digits = payload.substr(at + 1);
    int64_t ms = 0;
    auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), ms);
    if (ec == std::errc() && end == digits.data() + digits.size()) {
      stamp = ms;
      payload = payload.substr(0, at);
    }
  }
  std::string text(payload);
  if (!text.empty()) {
    char* end = nullptr;
    double x = std::strtod(text.c_str(), &end);
    if (end == text.c_str() + text.size()) return {Value(x), stamp};
  }
  return {Value(text), stamp};
}

bool TopicMatches(std::string_view filter, std::string_view topic) {
  while (true) {
    size_t fs = filter.find('/');
    size_t ts = topic.find('/');
    std::string_view f = filter.substr(0, fs);
    std::string_view t = topic.substr(0, ts);
    if (f == "#") return true;
    if (f != "+" && f != t) return false;
    if (fs == std::string_view::npos || ts == std::string_view::npos) {
      return fs == std::string_view::npos && ts == std::string_view::npos;
    }
    filter.remove_prefix(fs + 1);
    topic.remove_prefix(ts + 1);
  }
}

void SimBus::Publish(const WireMessage& message) {
  if (logging_) log_.push_back(message);
  for (const auto& [filter, handler] : subscribers_) {
    if (TopicMatches(filter, message.topic)) handler(message);
  }
}

void SimBus::Subscribe(const std::string& filter, Handler handler) {
  subscribers_.emplace_back(filter, std::move(handler));
}

Mediator::Mediator(const DeviceRegistry& registry, Engine* engine, UpstreamTransport* upstream,
                   MediatorOptions options)
    : registry_(registry),
      engine_(engine),
      upstream_(upstream),
      options_(options),
      rng_(options.seed) {}

std::string Mediator::FreshId() {
  static const char kHex[] = "0123456789abcdef";
  while (true) {
    std::string id;
    uint64_t x = rng_();
    for (int i = 0; i < 12; ++i, x >>= 4) id += kHex[x & 15];
    bool taken = false;
    for (const auto& [real, vd] : devices_) taken = taken || vd.upstream_id == id;
    if (!taken) return id;
  }
}

VirtualDevice Mediator::RegisterDevice(const DeviceDescriptor& device) {
  std::lock_guard<std::mutex> lock(mu_);
  if (devices_.count(device.id)) throw DuplicateId("device " + device.id + " already registered");
  VirtualDevice vd;
  vd.real_id = device.id;
  vd.upstream_id = FreshId();
  for (const AttributeSpec& a : device.attributes) {
    std::string data = "data/" + vd.upstream_id + "/" + a.name;
    vd.data_topics[a.name] = data;
    data_index_[data] = Source::Device(device.id, a.name);
    if (a.commandable) {
      std::string cmd = "cmd/" + vd.upstream_id + "/" + a.name;
      vd.command_topics[a.name] = cmd;
      command_index_[cmd] = {device.id, a.name};
    }
  }
  devices_[device.id] = vd;
  return vd;
}

void Mediator::RegisterAll() {
  for (const DeviceDescriptor& d : registry_.devices()) RegisterDevice(d);
}

const VirtualDevice* Mediator::Find(const std::string& real_id) const {
  auto it = devices_.find(real_id);
  return it == devices_.end() ? nullptr : &it->second;
}

std::optional<Source> Mediator::SourceOfTopic(const std::string& topic) const {
  auto it = data_index_.find(topic);
  if (it == data_index_.end()) return std::nullopt;
  return it->second;
}

WireMessage Mediator::PublishUpstream(const ReportEnvelope& envelope) {
  const VirtualDevice* vd = Find(envelope.source.subject);
  if (!vd || envelope.source.type != SourceType::kDevice) {
    throw UnknownSource("no virtual device for " + envelope.source.ToString());
  }
  auto topic = vd->data_topics.find(envelope.source.attribute);
  if (topic == vd->data_topics.end()) {
    throw UnknownSource("no virtual device for " + envelope.source.ToString());
  }
  std::optional<int64_t> stamp;
  if (options_.stamp_payload) stamp = envelope.observed_at;
  WireMessage m{topic->second, EncodePayload(envelope.value, stamp), envelope.emit_at};
  if (upstream_) upstream_->Publish(m);
  return m;
}

std::vector<WireMessage> Mediator::PublishAll(const std::vector<ReportEnvelope>& envelopes) {
  std::vector<WireMessage> out;
  out.reserve(envelopes.size());
  for (const ReportEnvelope& e : envelopes) out.push_back(PublishUpstream(e));
  return out;
}

std::vector<WireMessage> Mediator::Ingest(const DataItem& item) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!Find(item.source.subject)) {
    throw UnknownSource("no virtual device for " + item.source.ToString());
  }
  auto last = last_seen_.find(item.source);
  if (last != last_seen_.end() && last->second.value == item.value &&
      item.timestamp - last->second.timestamp < options_.dedup_window_ms) {
    ++collapsed_;
    return {};
  }
  last_seen_[item.source] = item;
  return PublishAll(engine_->OnEvent(item));
}

std::vector<WireMessage> Mediator::Tick(int64_t now) {
  std::lock_guard<std::mutex> lock(mu_);
  return PublishAll(engine_->OnTick(now));
}

void Mediator::SubscribeCommands() {
  if (!upstream_) throw Error("mediator has no upstream transport");
  upstream_->Subscribe("cmd/+/+", [this](const WireMessage& m) { RelayCommand(m.topic, m.payload); });
}

std::optional<DeviceCommand> Mediator::RelayCommand(const std::string& topic,
                                                    const std::string& payload) {
  DeviceCommand cmd;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = command_index_.find(topic);
    if (it == command_index_.end()) {
      ++dropped_;
      return std::nullopt;
    }
    cmd = {it->second.first, it->second.second, payload};
  }
  if (command_sink_) command_sink_(cmd);
  return cmd;
}

}  // namespace flowguard
