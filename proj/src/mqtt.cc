#include "flowguard/mqtt.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <memory>

#include "flowguard/error.h"

namespace flowguard {

namespace mqtt {

std::string EncodeRemainingLength(size_t n) {
  std::string out;
  do {
    uint8_t byte = n % 128;
    n /= 128;
    if (n > 0) byte |= 0x80;
    out += static_cast<char>(byte);
  } while (n > 0);
  return out;
}

std::string EncodeString(std::string_view s) {
  std::string out;
  out += static_cast<char>((s.size() >> 8) & 0xff);
  out += static_cast<char>(s.size() & 0xff);
  out += s;
  return out;
}

namespace {

std::string Packet(uint8_t header, const std::string& body) {
  return static_cast<char>(header) + EncodeRemainingLength(body.size()) + body;
}

}  // namespace

std::string ConnectPacket(const MqttOptions& o) {
  std::string body = EncodeString("MQTT");
  body += static_cast<char>(4);  // protocol level 3.1.1
  uint8_t flags = 0x02;          // clean session
  if (!o.username.empty()) flags |= 0x80;
  if (!o.password.empty()) flags |= 0x40;
  body += static_cast<char>(flags);
  body += static_cast<char>((o.keepalive_s >> 8) & 0xff);
  body += static_cast<char>(o.keepalive_s & 0xff);
  body += EncodeString(o.client_id);
  if (!o.username.empty()) body += EncodeString(o.username);
  if (!o.password.empty()) body += EncodeString(o.password);
  return Packet(0x10, body);
}

std::string PublishPacket(std::string_view topic, std::string_view payload) {
  return Packet(0x30, EncodeString(topic) + std::string(payload));
}

std::string SubscribePacket(uint16_t id, std::string_view filter) {
  std::string body;
  body += static_cast<char>(id >> 8);
  body += static_cast<char>(id & 0xff);
  body += EncodeString(filter);
  body += static_cast<char>(0);  // QoS 0
  return Packet(0x82, body);
}

}  // namespace mqtt

namespace {

bool ReadAll(int fd, char* buf, size_t n) {
  while (n > 0) {
    ssize_t r = ::recv(fd, buf, n, 0);
    if (r <= 0) return false;
    buf += r;
    n -= static_cast<size_t>(r);
  }
  return true;
}

bool WriteAll(int fd, const std::string& data) {
  const char* p = data.data();
  size_t n = data.size();
  while (n > 0) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w <= 0) return false;
    p += w;
    n -= static_cast<size_t>(w);
  }
  return true;
}

// Reads one packet: the first header byte and the variable part.
bool ReadPacket(int fd, uint8_t* header, std::string* body) {
  char h;
  if (!ReadAll(fd, &h, 1)) return false;
  *header = static_cast<uint8_t>(h);
  size_t len = 0;
  size_t mult = 1;
  for (int i = 0; i < 4; ++i) {
    char b;
    if (!ReadAll(fd, &b, 1)) return false;
    len += (static_cast<uint8_t>(b) & 0x7f) * mult;
    mult *= 128;
    if (!(static_cast<uint8_t>(b) & 0x80)) break;
  }
  body->resize(len);
  return len == 0 || ReadAll(fd, body->data(), len);
}

size_t ReadU16(const std::string& s, size_t pos) {
  return (static_cast<uint8_t>(s[pos]) << 8) | static_cast<uint8_t>(s[pos + 1]);
}

// Topic and payload of a PUBLISH packet.
bool ParsePublish(uint8_t header, const std::string& body, std::string* topic,
                  std::string* payload) {
  if (body.size() < 2) return false;
  size_t len = ReadU16(body, 0);
  if (body.size() < 2 + len) return false;
  *topic = body.substr(2, len);
  size_t pos = 2 + len;
  if ((header >> 1) & 0x03) pos += 2;  // packet id for QoS > 0
  if (pos > body.size()) return false;
  *payload = body.substr(pos);
  return true;
}

}  // namespace

MqttOptions MqttOptions::FromAddress(const std::string& address) {
  MqttOptions o;
  size_t colon = address.rfind(':');
  if (colon == std::string::npos) {
    o.host = address;
  } else {
    o.host = address.substr(0, colon);
    try {
      o.port = std::stoi(address.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error("bad broker address '" + address + "'");
    }
  }
  if (const char* u = std::getenv("FLOWGUARD_MQTT_USER")) o.username = u;
  if (const char* p = std::getenv("FLOWGUARD_MQTT_PASSWORD")) o.password = p;
  return o;
}

MqttClient::MqttClient(MqttOptions options) : options_(std::move(options)) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string port = std::to_string(options_.port);
  if (getaddrinfo(options_.host.c_str(), port.c_str(), &hints, &res) != 0) {
    throw Error("cannot resolve broker " + options_.host);
  }
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd_ = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd_ < 0) continue;
    if (::connect(fd_, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd_);
    fd_ = -1;
  }
  freeaddrinfo(res);
  if (fd_ < 0) throw Error("cannot connect to broker " + options_.host + ":" + port);
  uint8_t header = 0;
  std::string body;
  if (!WriteAll(fd_, mqtt::ConnectPacket(options_)) || !ReadPacket(fd_, &header, &body) ||
      (header >> 4) != 2 || body.size() < 2) {
    ::close(fd_);
    throw Error("broker did not acknowledge the connection");
  }
  if (body[1] != 0) {
    ::close(fd_);
    throw Error("broker refused the connection, code " + std::to_string(int(body[1])));
  }
  running_ = true;
  reader_ = std::thread([this] { ReadLoop(); });
  pinger_ = std::thread([this] {
    auto interval = std::chrono::milliseconds(options_.keepalive_s * 500);
    auto next = std::chrono::steady_clock::now() + interval;
    while (running_) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      if (std::chrono::steady_clock::now() < next) continue;
      next += interval;
      Send(std::string("\xc0\x00", 2));
    }
  });
}

MqttClient::~MqttClient() { Close(); }

void MqttClient::Send(const std::string& packet) {
  std::lock_guard<std::mutex> lock(write_mu_);
  if (fd_ < 0 || !WriteAll(fd_, packet)) throw Error("broker connection lost");
}

void MqttClient::Publish(const WireMessage& message) {
  Send(mqtt::PublishPacket(message.topic, message.payload));
}

void MqttClient::Subscribe(const std::string& filter, Handler handler) {
  {
    std::lock_guard<std::mutex> lock(handlers_mu_);
    handlers_.emplace_back(filter, std::move(handler));
  }
  uint16_t id;
  {
    std::lock_guard<std::mutex> lock(write_mu_);
    id = next_packet_id_++;
    if (next_packet_id_ == 0) next_packet_id_ = 1;
  }
  Send(mqtt::SubscribePacket(id, filter));
}

void MqttClient::ReadLoop() {
  uint8_t header;
  std::string body;
  while (running_ && ReadPacket(fd_, &header, &body)) {
    if ((header >> 4) != 3) continue;
    WireMessage m;
    if (!ParsePublish(header, body, &m.topic, &m.payload)) continue;
    std::vector<Handler> matched;
    {
      std::lock_guard<std::mutex> lock(handlers_mu_);
      for (const auto& [filter, h] : handlers_) {
        if (TopicMatches(filter, m.topic)) matched.push_back(h);
      }
    }
    for (const Handler& h : matched) h(m);
  }
  running_ = false;
}

void MqttClient::Close() {
  bool was = running_.exchange(false);
  if (fd_ >= 0) {
    if (was) {
      std::lock_guard<std::mutex> lock(write_mu_);
      WriteAll(fd_, std::string("\xe0\x00", 2));
    }
    ::shutdown(fd_, SHUT_RDWR);
  }
  if (reader_.joinable()) reader_.join();
  if (pinger_.joinable()) pinger_.join();
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

LoopbackBroker::LoopbackBroker(int port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error("broker: socket failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    throw Error("broker: cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { AcceptLoop(); });
}

LoopbackBroker::~LoopbackBroker() { Stop(); }

void LoopbackBroker::Stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& c : clients_) ::shutdown(c->fd, SHUT_RDWR);
  }
  for (std::thread& t : threads_) t.join();
  for (auto& c : clients_) ::close(c->fd);
  ::close(listen_fd_);
}

void LoopbackBroker::AcceptLoop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard<std::mutex> lock(mu_);
    clients_.push_back(std::make_unique<Client>());
    Client* c = clients_.back().get();
    c->fd = fd;
    threads_.emplace_back([this, c] { Serve(c); });
  }
}

void LoopbackBroker::Serve(Client* c) {
  uint8_t header;
  std::string body;
  while (running_ && ReadPacket(c->fd, &header, &body)) {
    switch (header >> 4) {
      case 1: {  // CONNECT
        std::lock_guard<std::mutex> lock(c->write_mu);
        WriteAll(c->fd, std::string("\x20\x02\x00\x00", 4));
        break;
      }
      case 3: {  // PUBLISH
        std::string topic, payload;
        if (!ParsePublish(header, body, &topic, &payload)) break;
        ++published_;
        Route(topic, mqtt::PublishPacket(topic, payload));
        break;
      }
      case 8: {  // SUBSCRIBE
        if (body.size() < 2) break;
        size_t pos = 2;
        std::string granted;
        while (pos + 2 <= body.size()) {
          size_t len = ReadU16(body, pos);
          if (pos + 2 + len + 1 > body.size()) break;
          {
            std::lock_guard<std::mutex> lock(mu_);
            c->filters.push_back(body.substr(pos + 2, len));
          }
          pos += 2 + len + 1;
          granted += '\0';
        }
        std::string ack = body.substr(0, 2) + granted;
        std::lock_guard<std::mutex> lock(c->write_mu);
        WriteAll(c->fd, "\x90" + mqtt::EncodeRemainingLength(ack.size()) + ack);
        break;
      }
      case 12: {  // PINGREQ
        std::lock_guard<std::mutex> lock(c->write_mu);
        WriteAll(c->fd, std::string("\xd0\x00", 2));
        break;
      }
      case 14:  // DISCONNECT
        return;
      default:
        break;
    }
  }
}

void LoopbackBroker::Route(const std::string& topic, const std::string& packet) {
  std::vector<Client*> targets;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& c : clients_) {
      for (const std::string& f : c->filters) {
        if (TopicMatches(f, topic)) {
          targets.push_back(c.get());
          break;
        }
      }
    }
  }
  for (Client* c : targets) {
    std::lock_guard<std::mutex> lock(c->write_mu);
    WriteAll(c->fd, packet);
  }
}

}  // namespace flowguard
