// Policy execution over an event stream.
//
// The engine owns the state stores, the timers and the queue of reports
// waiting for their emission time. Time is logical (milliseconds) and only
// advances through OnEvent and OnTick.

#ifndef FLOWGUARD_ENGINE_H_
#define FLOWGUARD_ENGINE_H_

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "flowguard/model.h"
#include "flowguard/policy.h"
#include "flowguard/registry.h"
#include "flowguard/stores.h"

namespace flowguard {

struct EngineConfig {
  int64_t diff_keep_delay_ms = kDefaultDiffKeepDelayMs;
  int64_t tick_ms = 1;
  uint64_t seed = 1;
  // Report every item unchanged; policies are not evaluated.
  bool pass_through = false;

  static EngineConfig FromJson(std::string_view text);
  static EngineConfig LoadFile(const std::string& path);
};

struct ReportEnvelope {
  Source source;
  Value value;
  int64_t emit_at = 0;
  // When the reported reading was taken. Differs from emit_at for delayed
  // and timer-driven reports.
  int64_t observed_at = 0;
  std::string policy_id;

  bool operator==(const ReportEnvelope&) const = default;
};

struct Timer {
  struct Pending {
    Callback callback;
    DataItem datum;
    std::string policy_id;  // the policy that registered it
    bool raised = false;    // the due time was announced to the policies
  };

  std::string id;
  std::optional<int64_t> started_at;
  std::vector<Pending> callbacks;

  bool running() const { return started_at.has_value(); }
  // Earliest due time among callbacks not yet announced.
  std::optional<int64_t> NextDue() const;
};

// UPs first, then APs; file order within each class. Throws DuplicateId,
// or InvalidPolicy when an AP priority is not below every UP priority.
std::vector<Policy> OrderPolicies(std::vector<Policy> aps, std::vector<Policy> ups);

class Engine {
 public:
  explicit Engine(const DeviceRegistry& registry, EngineConfig config = {});

  // Validates and orders the policies (see OrderPolicies).
  void LoadPolicies(std::vector<Policy> aps, std::vector<Policy> ups = {});
  const std::vector<Policy>& policies() const { return policies_; }

  // Processes everything due before the item, then the item itself, and
  // returns the reports emitted up to and including its timestamp. Throws
  // Error when time runs backwards.
  std::vector<ReportEnvelope> OnEvent(const DataItem& item);
  // Fires due timers and releases delayed reports up to `now`.
  std::vector<ReportEnvelope> OnTick(int64_t now);

  std::optional<int64_t> NextDue() const;
  int64_t now() const { return now_; }
  const StateStores& stores() const { return stores_; }
  const std::map<std::string, Timer>& timers() const { return timers_; }
  const EngineConfig& config() const { return config_; }
  uint64_t suppressed() const { return suppressed_; }

 private:
  struct Scheduled {
    ReportEnvelope envelope;
    int64_t batch = 0;
    int klass = 0;  // 0: CHECK data, 1: trigger and callback data
    int64_t seq = 0;
    Action action;
    bool from_user = false;
  };

  struct TimerEffect {
    Action action;
    DataItem datum;
    std::string policy_id;
  };

  struct Evaluation {
    std::vector<Scheduled> reports;
    std::vector<TimerEffect> effects;
  };

  std::optional<Value> Fetch(const Source& source, int64_t at) const;
  std::optional<Value> FetchStar(const Source& source, int64_t at) const;
  void Evaluate(const Policy& policy, const DataItem& item, Evaluation* out);
  void ApplyData(const Action& action, const DataItem& datum, int klass,
                 const Policy& policy, Evaluation* out);
  void ApplyEffects(const std::vector<TimerEffect>& effects, Evaluation* out);
  void RunCallbacks(Timer& timer, Evaluation* out);
  void Step(const DataItem& item);
  void RaiseTimer(const std::string& id, int64_t due);
  void Schedule(std::vector<Scheduled> reports);
  void Flush(int64_t upto, std::vector<ReportEnvelope>* out);
  bool Suppressed(const Scheduled& s);
  std::optional<int64_t> NextTimerDue(std::string* id) const;

  const DeviceRegistry& registry_;
  EngineConfig config_;
  std::vector<Policy> policies_;
  StateStores stores_;
  std::map<std::string, Timer> timers_;
  std::vector<Scheduled> queue_;  // sorted by emission order
  std::mt19937_64 rng_;
  int64_t now_ = 0;
  bool started_ = false;
  int64_t batch_ = 0;
  int64_t seq_ = 0;
  uint64_t suppressed_ = 0;
};

// Runs an engine on its own thread. Items and ticks may be submitted from
// any thread; reports are delivered to the sink on the engine thread in
// emission order.
class EngineLoop {
 public:
  using Sink = std::function<void(const ReportEnvelope&)>;

  EngineLoop(Engine* engine, Sink sink);
  ~EngineLoop();
  EngineLoop(const EngineLoop&) = delete;
  EngineLoop& operator=(const EngineLoop&) = delete;

  void Submit(DataItem item);
  void Tick(int64_t now);
  // Blocks until every submitted task has been processed.
  void Drain();
  void Stop();
  // First error raised by the engine, if any.
  std::optional<std::string> error() const;

 private:
  using Task = std::variant<DataItem, int64_t>;

  void Run();

  Engine* engine_;
  Sink sink_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<Task> tasks_;
  bool busy_ = false;
  bool stopping_ = false;
  std::optional<std::string> error_;
  std::thread thread_;
};

}  // namespace flowguard

#endif  // FLOWGUARD_ENGINE_H_
