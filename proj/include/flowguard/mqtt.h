// Minimal MQTT 3.1.1 over TCP: a QoS 0 client used as the broker transport
// of the mediator, and a small loopback broker for tests and local runs.

#ifndef FLOWGUARD_MQTT_H_
#define FLOWGUARD_MQTT_H_

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "flowguard/mediator.h"

namespace flowguard {

struct MqttOptions {
  std::string host = "127.0.0.1";
  int port = 1883;
  std::string client_id = "flowguard";
  std::string username;
  std::string password;
  int keepalive_s = 60;

  // "host:port" or "host"; credentials from FLOWGUARD_MQTT_USER and
  // FLOWGUARD_MQTT_PASSWORD when set.
  static MqttOptions FromAddress(const std::string& address);
};

class MqttClient : public UpstreamTransport {
 public:
  // Connects and waits for CONNACK. Throws Error on failure.
  explicit MqttClient(MqttOptions options);
  ~MqttClient() override;
  MqttClient(const MqttClient&) = delete;
  MqttClient& operator=(const MqttClient&) = delete;

  void Publish(const WireMessage& message) override;
  void Subscribe(const std::string& filter, Handler handler) override;
  void Close();
  bool connected() const { return running_; }

 private:
  void Send(const std::string& packet);
  void ReadLoop();

  MqttOptions options_;
  int fd_ = -1;
  std::mutex write_mu_;
  std::mutex handlers_mu_;
  std::vector<std::pair<std::string, Handler>> handlers_;
  uint16_t next_packet_id_ = 1;
  std::atomic<bool> running_{false};
  std::thread reader_;
  std::thread pinger_;
};

// Accepts clients on 127.0.0.1 and routes QoS 0 publishes to matching
// subscriptions. Port 0 picks a free port.
class LoopbackBroker {
 public:
  explicit LoopbackBroker(int port = 0);
  ~LoopbackBroker();
  LoopbackBroker(const LoopbackBroker&) = delete;
  LoopbackBroker& operator=(const LoopbackBroker&) = delete;

  int port() const { return port_; }
  uint64_t published() const { return published_; }
  void Stop();

 private:
  struct Client {
    int fd;
    std::vector<std::string> filters;
    std::mutex write_mu;
  };

  void AcceptLoop();
  void Serve(Client* client);
  void Route(const std::string& topic, const std::string& packet);

  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{true};
  std::atomic<uint64_t> published_{0};
  std::mutex mu_;
  std::vector<std::unique_ptr<Client>> clients_;
  std::vector<std::thread> threads_;
  std::thread acceptor_;
};

// Packet helpers, exposed for tests.
namespace mqtt {
std::string EncodeRemainingLength(size_t n);
std::string EncodeString(std::string_view s);
std::string ConnectPacket(const MqttOptions& options);
std::string PublishPacket(std::string_view topic, std::string_view payload);
std::string SubscribePacket(uint16_t packet_id, std::string_view filter);
}  // namespace mqtt

}  // namespace flowguard

#endif  // FLOWGUARD_MQTT_H_
