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
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emaas/energy_model.hpp"
#include "emaas/types.hpp"

namespace emaas {

/// Raised for requests the state machine must refuse: unknown ids, duplicate
/// registrations, results from a peer that is not the assignee. The scheduler
/// is unchanged when this is thrown.
class SchedulerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PeerRole { Provider, SuperProvider };
enum class PeerState { Idle, Busy, Offline };

std::string_view to_string(PeerRole role);
std::string_view to_string(PeerState state);
PeerRole parse_peer_role(std::string_view text);

struct PeerRecord {
  std::string peer_id;
  PeerRole role = PeerRole::Provider;
  std::string device_model;
  PeerState state = PeerState::Idle;
  std::optional<std::string> current_job;
  std::uint64_t last_assigned = 0;  // assignment counter, 0 = never used
};

enum class JobState {
  Submitted,
  AssignedHardware,
  AssignedModel,
  Waiting,
  Running,
  Completed,
  Failed,
};

std::string_view to_string(JobState state);

/// The declared job state machine. Besides the nominal path, Waiting may
/// downgrade to AssignedModel when the gate opens, and Submitted/Waiting may
/// fail (no capacity, max wait).
bool is_legal_transition(JobState from, JobState to);

enum class Outcome { AssignHardware, AssignModel, Wait, Fail };

std::string_view to_string(Outcome outcome);
Outcome parse_outcome(std::string_view text);

/// One routing verdict, with the reliability gate's view at that moment.
struct Decision {
  std::string job_id;
  Outcome outcome = Outcome::Wait;
  std::optional<std::string> peer_id;
  double predicted_abs_error_w = 0.0;
  bool gate_passed = false;
  std::uint64_t hardware_samples = 0;
  double theta_w = 0.0;
  std::uint64_t at = 0;
  std::string reason;

  friend bool operator==(const Decision&, const Decision&) = default;
};

struct Job {
  std::string job_id;
  AppManifest manifest;
  ExecutionContext context;
  FeatureVector features;
  JobState state = JobState::Submitted;
  std::optional<std::string> peer_id;
  std::optional<MeasurementRecord> record;
  std::string failure_reason;
  std::uint64_t submitted_at = 0;
  std::uint64_t waiting_since = 0;
  std::optional<std::string> retry_of;
  std::optional<std::string> resubmitted_as;
  std::vector<JobState> history;
  std::vector<Decision> decisions;

  bool terminal() const {
    return state == JobState::Completed || state == JobState::Failed;
  }
};

struct DeviceModels {
  EnergyModel energy;
  ReliabilityModel reliability;
  std::uint64_t energy_updates = 0;
  std::uint64_t reliability_updates = 0;
};

struct SchedulerConfig {
  ApiVocabulary vocab;
  std::vector<std::string> complexity_names;
  GateConfig gate;
  std::optional<std::uint64_t> max_wait;  // ticks; unbounded when empty

  FeatureLayout layout() const { return {vocab.size(), complexity_names.size()}; }
};

struct Registry {
  std::map<std::string, PeerRecord> peers;
  std::map<std::string, std::deque<std::string>> wait_queues;
  std::map<std::string, DeviceModels> models;
};

enum class PeerEventKind { Register, Heartbeat, Offline };

std::string_view to_string(PeerEventKind kind);
PeerEventKind parse_peer_event_kind(std::string_view text);

struct PeerEvent {
  PeerEventKind kind = PeerEventKind::Heartbeat;
  std::string peer_id;
  PeerRole role = PeerRole::Provider;  // register only
  std::string device_model;            // register only
};

/// Single-writer broker state machine: peer registry, job lifecycle, routing
/// between hardware and model measurements, and the model update loop.
///
/// Every mutation is one call; routing decisions made as a consequence are
/// appended to an outbox that drivers drain and persist.
class Scheduler {
 public:
  explicit Scheduler(SchedulerConfig config);

  const SchedulerConfig& config() const { return config_; }
  const Registry& registry() const { return registry_; }
  std::uint64_t now() const { return now_; }

  /// Moves the clock forward and fails waiting jobs older than max_wait.
  void advance_clock(std::uint64_t tick);

  const Job& submit(std::string job_id, AppManifest manifest,
                    ExecutionContext context);

  /// Hardware result for a running hardware job. Returns the record, or
  /// nullopt when the measurement was malformed and the job failed instead.
  std::optional<MeasurementRecord> complete_hardware(const std::string& job_id,
                                                     const std::string& peer_id,
                                                     double measured_j,
                                                     double duration_s);

  MeasurementRecord complete_model(const std::string& job_id,
                                   const std::string& peer_id);

  void peer_event(const PeerEvent& event);

  /// The routing policy, evaluated against the current registry. Pure.
  Decision route(const Job& job) const;

  const Job& job(const std::string& job_id) const;
  const Job* find_job(const std::string& job_id) const;
  const std::vector<std::string>& job_order() const { return job_order_; }
  std::optional<std::size_t> queue_position(const std::string& job_id) const;
  const DeviceModels* models(const std::string& device_model) const;

  std::vector<Decision> take_decisions();

 private:
  Job& mutable_job(const std::string& job_id);
  DeviceModels& ensure_models(const std::string& device_model);
  void transition(Job& job, JobState next);
  void apply(Job& job, const Decision& decision);
  void record(Job& job, Decision decision);
  void drain_queue(const std::string& device_model);
  void fail_job(Job& job, const std::string& reason);
  void release_peer(const std::string& peer_id);
  const PeerRecord* pick_idle(const std::string& device_model, PeerRole role) const;

  SchedulerConfig config_;
  Registry registry_;
  std::unordered_map<std::string, Job> jobs_;
  std::vector<std::string> job_order_;
  std::vector<Decision> outbox_;
  std::uint64_t now_ = 0;
  std::uint64_t assignment_counter_ = 0;
};

}  // namespace emaas
