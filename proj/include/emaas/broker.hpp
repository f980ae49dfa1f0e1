// Copyright 2026 The EMaaS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "emaas/event_log.hpp"
#include "emaas/scheduler.hpp"
#include "emaas/serialization.hpp"

namespace emaas {

struct BrokerConfig {
  SchedulerConfig scheduler;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path log_path;  // in-memory log when empty
  std::uint64_t snapshot_every = 100;  // hardware results between snapshots
  std::int64_t heartbeat_timeout_ms = 30'000;
  std::string client_token;  // bearer token for /jobs, /models, /metrics
  std::string peer_token;    // bearer token for /peers
};

/// Keys: listen ("host:port"), log_path, snapshot_every, heartbeat_timeout_s,
/// client_token, peer_token, plus the scheduler keys (vocabulary,
/// complexity_names, gate, max_wait).
BrokerConfig broker_config_from_json(const Json& doc);

/// The requested job or peer does not exist.
class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Milliseconds on a monotonic clock; injectable for tests.
using ClockMs = std::function<std::int64_t()>;
ClockMs steady_clock_ms();

/// Thread-safe front of one Scheduler. Every state-changing request is
/// applied, appended to the event log (durably when file-backed) and only
/// then acknowledged. The scheduler clock advances by one per logged input.
class Broker {
 public:
  explicit Broker(BrokerConfig config, ClockMs clock = steady_clock_ms());
  ~Broker();
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  struct Submitted {
    std::string job_id;
    bool created = true;  // false when the request token was seen before
    Json status;
  };

  /// An empty request token disables idempotency for that call.
  Submitted submit(const AppManifest& manifest, const ExecutionContext& context,
                   const std::string& request_token = {});
  /// Same, from the POST /jobs body {manifest, context, request_token?}.
  Submitted submit_json(const Json& body);

  Json status(const std::string& job_id) const;

  Json register_peer(const std::string& peer_id, PeerRole role,
                     const std::string& device_model);
  /// Refreshes liveness. An offline peer rejoins. Returns the peer's state
  /// and current assignment (manifest included) or null.
  Json heartbeat(const std::string& peer_id);
  /// Hardware jobs need energy_j and duration_s; model jobs ignore them.
  Json result(const std::string& peer_id, const std::string& job_id,
              std::optional<double> energy_j, std::optional<double> duration_s);

  /// Marks peers silent for longer than the heartbeat timeout offline.
  /// Returns how many were marked.
  std::size_t reap();

  Json models(const std::string& device_model) const;
  Json metrics() const;

  /// Appends a model snapshot to the log.
  void snapshot();

  std::vector<PersistedEvent> events() const;
  std::uint64_t last_seq() const;
  const BrokerConfig& config() const { return config_; }

 private:
  void tick();
  void log_decisions();
  void after_hardware_result();
  Json status_locked(const Job& job) const;
  Json assignment_locked(const PeerRecord& peer) const;
  void restore(const LoadedLog& loaded);

  BrokerConfig config_;
  ClockMs clock_;
  mutable std::mutex mu_;
  std::unique_ptr<Scheduler> sched_;
  EventLog log_;
  std::map<std::string, std::string> tokens_;  // request token -> job id
  std::map<std::string, std::int64_t> last_seen_ms_;
  std::uint64_t job_counter_ = 0;
  std::uint64_t hardware_results_ = 0;
};

}  // namespace emaas
