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

#include "emaas/scheduler.hpp"

#include <algorithm>
#include <cmath>

namespace emaas {

namespace {

constexpr std::string_view kRetryMarker = ".retry";

}  // namespace

std::string_view to_string(PeerRole role) {
  return role == PeerRole::Provider ? "provider" : "super_provider";
}

std::string_view to_string(PeerState state) {
  switch (state) {
    case PeerState::Idle: return "idle";
    case PeerState::Busy: return "busy";
    case PeerState::Offline: return "offline";
  }
  return "unknown";
}

PeerRole parse_peer_role(std::string_view text) {
  if (text == "provider") return PeerRole::Provider;
  if (text == "super_provider") return PeerRole::SuperProvider;
  throw ContractViolation("unknown peer role '" + std::string(text) + "'");
}

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::Submitted: return "submitted";
    case JobState::AssignedHardware: return "assigned_hardware";
    case JobState::AssignedModel: return "assigned_model";
    case JobState::Waiting: return "waiting";
    case JobState::Running: return "running";
    case JobState::Completed: return "completed";
    case JobState::Failed: return "failed";
  }
  return "unknown";
}

bool is_legal_transition(JobState from, JobState to) {
  switch (from) {
    case JobState::Submitted:
      return to == JobState::AssignedHardware || to == JobState::AssignedModel ||
             to == JobState::Waiting || to == JobState::Failed;
    case JobState::Waiting:
      return to == JobState::AssignedHardware || to == JobState::AssignedModel ||
             to == JobState::Failed;
    case JobState::AssignedHardware:
    case JobState::AssignedModel:
      return to == JobState::Running;
    case JobState::Running:
      return to == JobState::Completed || to == JobState::Failed;
    case JobState::Completed:
    case JobState::Failed:
      return false;
  }
  return false;
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::AssignHardware: return "assign_hardware";
    case Outcome::AssignModel: return "assign_model";
    case Outcome::Wait: return "wait";
    case Outcome::Fail: return "fail";
  }
  return "unknown";
}

Outcome parse_outcome(std::string_view text) {
  if (text == "assign_hardware") return Outcome::AssignHardware;
  if (text == "assign_model") return Outcome::AssignModel;
  if (text == "wait") return Outcome::Wait;
  if (text == "fail") return Outcome::Fail;
  throw ContractViolation("unknown decision outcome '" + std::string(text) + "'");
}

std::string_view to_string(PeerEventKind kind) {
  switch (kind) {
    case PeerEventKind::Register: return "register";
    case PeerEventKind::Heartbeat: return "heartbeat";
    case PeerEventKind::Offline: return "offline";
  }
  return "unknown";
}

PeerEventKind parse_peer_event_kind(std::string_view text) {
  if (text == "register") return PeerEventKind::Register;
  if (text == "heartbeat") return PeerEventKind::Heartbeat;
  if (text == "offline") return PeerEventKind::Offline;
  throw ContractViolation("unknown peer event '" + std::string(text) + "'");
}

Scheduler::Scheduler(SchedulerConfig config) : config_(std::move(config)) {
  if (!(config_.gate.theta_w > 0.0)) throw ContractViolation("theta must be positive");
  if (config_.gate.n_min < 1) throw ContractViolation("n_min must be at least 1");
}

void Scheduler::advance_clock(std::uint64_t tick) {
  if (tick < now_)
    throw SchedulerError("clock cannot move backwards (" + std::to_string(tick) +
                         " < " + std::to_string(now_) + ")");
  now_ = tick;
  if (!config_.max_wait) return;
  for (auto& [device, queue] : registry_.wait_queues) {
    for (auto it = queue.begin(); it != queue.end();) {
      Job& job = mutable_job(*it);
      if (now_ - job.waiting_since > *config_.max_wait) {
        it = queue.erase(it);
        Decision d = route(job);
        d.outcome = Outcome::Fail;
        d.peer_id.reset();
        d.reason = "max wait exceeded";
        record(job, d);
        fail_job(job, d.reason);
      } else {
        ++it;
      }
    }
  }
}

const Job& Scheduler::submit(std::string job_id, AppManifest manifest,
                             ExecutionContext context) {
  if (job_id.empty()) throw ContractViolation("job id must not be empty");
  if (jobs_.count(job_id)) throw SchedulerError("duplicate job id '" + job_id + "'");
  if (context.device_model.empty())
    throw ContractViolation("execution context needs a device model");
  if (manifest.tests.empty()) throw ContractViolation("manifest has no tests");
  for (const auto& t : manifest.tests)
    if (!(t.nominal_duration_s > 0.0) || !std::isfinite(t.nominal_duration_s))
      throw ContractViolation("test '" + t.test_id + "' needs a positive duration");

  Job job;
  job.features = extract_features(manifest, config_.vocab, config_.complexity_names);
  job.job_id = job_id;
  job.manifest = std::move(manifest);
  job.context = std::move(context);
  job.submitted_at = now_;
  job.history.push_back(JobState::Submitted);
  ensure_models(job.context.device_model);

  auto [it, inserted] = jobs_.emplace(job_id, std::move(job));
  job_order_.push_back(job_id);
  Job& stored = it->second;
  Decision d = route(stored);
  record(stored, d);
  apply(stored, d);
  return stored;
}

std::optional<MeasurementRecord> Scheduler::complete_hardware(
    const std::string& job_id, const std::string& peer_id, double measured_j,
    double duration_s) {
  Job& job = mutable_job(job_id);
  if (job.state != JobState::Running || job.peer_id != peer_id)
    throw SchedulerError("peer '" + peer_id + "' is not assignee of job '" +
                         job_id + "'");
  const PeerRecord& peer = registry_.peers.at(peer_id);
  if (peer.role != PeerRole::SuperProvider)
    throw SchedulerError("job '" + job_id + "' was not routed to hardware");

  const std::string device = job.context.device_model;
  DeviceModels& models = ensure_models(device);
  const bool malformed = !(duration_s > 0.0) || !std::isfinite(duration_s) ||
                         !(measured_j >= 0.0) || !std::isfinite(measured_j);
  std::optional<MeasurementRecord> result;
  if (!malformed) {
    try {
      const double estimated_j = estimate_energy(models.energy, job.features, duration_s);
      const double epsilon = power_error(measured_j, estimated_j, duration_s);
      EnergyModel energy =
          update_energy_model(models.energy, job.features, measured_j, duration_s);
      ReliabilityModel reliability =
          update_reliability_model(models.reliability, job.features, epsilon);
      models.energy = std::move(energy);
      models.reliability = std::move(reliability);
      ++models.energy_updates;
      ++models.reliability_updates;
      result = MeasurementRecord{job_id, measured_j, duration_s,
                                 MeasurementSource::Hardware, epsilon, now_};
    } catch (const ContractViolation&) {
      result.reset();
    }
  }

  if (result) {
    job.record = result;
    transition(job, JobState::Completed);
  } else {
    fail_job(job, "malformed measurement");
  }
  release_peer(peer_id);
  drain_queue(device);
  return result;
}

MeasurementRecord Scheduler::complete_model(const std::string& job_id,
                                            const std::string& peer_id) {
  Job& job = mutable_job(job_id);
  if (job.state != JobState::Running || job.peer_id != peer_id)
    throw SchedulerError("peer '" + peer_id + "' is not assignee of job '" +
                         job_id + "'");
  const PeerRecord& peer = registry_.peers.at(peer_id);
  if (peer.role != PeerRole::Provider)
    throw SchedulerError("job '" + job_id + "' was not routed to a model estimate");

  const std::string device = job.context.device_model;
  auto it = registry_.models.find(device);
  if (it == registry_.models.end()) {
    fail_job(job, "routing invariant violated: no model for device");
    release_peer(peer_id);
    drain_queue(device);
    throw std::logic_error("no energy model for device '" + device + "'");
  }
  const double duration_s = job.manifest.suite_duration_s();
  MeasurementRecord rec{job_id, estimate_energy(it->second.energy, job.features, duration_s),
                        duration_s, MeasurementSource::Model, std::nullopt, now_};
  job.record = rec;
  transition(job, JobState::Completed);
  release_peer(peer_id);
  drain_queue(device);
  return rec;
}

void Scheduler::peer_event(const PeerEvent& event) {
  if (event.kind == PeerEventKind::Register) {
    if (event.peer_id.empty()) throw ContractViolation("peer id must not be empty");
    if (event.device_model.empty())
      throw ContractViolation("peer needs a device model");
    if (registry_.peers.count(event.peer_id))
      throw SchedulerError("peer '" + event.peer_id + "' is already registered");
    PeerRecord peer;
    peer.peer_id = event.peer_id;
    peer.role = event.role;
    peer.device_model = event.device_model;
    registry_.peers.emplace(peer.peer_id, peer);
    ensure_models(peer.device_model);
    drain_queue(peer.device_model);
    return;
  }

  auto it = registry_.peers.find(event.peer_id);
  if (it == registry_.peers.end())
    throw SchedulerError("unknown peer '" + event.peer_id + "'");
  PeerRecord& peer = it->second;
  const std::string device = peer.device_model;

  if (event.kind == PeerEventKind::Heartbeat) {
    if (peer.state == PeerState::Offline) {
      peer.state = PeerState::Idle;
      drain_queue(device);
    }
    return;
  }

  // Offline.
  if (peer.state == PeerState::Offline) return;
  std::optional<std::string> lost = peer.current_job;
  peer.state = PeerState::Offline;
  peer.current_job.reset();
  if (lost) {
    Job& victim = mutable_job(*lost);
    fail_job(victim, "peer lost");

    std::string root = victim.retry_of ? *victim.retry_of : victim.job_id;
    int attempt = 1;
    std::string retry_id;
    do {
      retry_id = root + std::string(kRetryMarker) + std::to_string(attempt++);
    } while (jobs_.count(retry_id));
    victim.resubmitted_as = retry_id;

    Job retry;
    retry.job_id = retry_id;
    retry.manifest = victim.manifest;
    retry.context = victim.context;
    retry.features = victim.features;
    retry.submitted_at = now_;
    retry.retry_of = root;
    retry.history.push_back(JobState::Submitted);
    Job& stored = jobs_.emplace(retry_id, std::move(retry)).first->second;
    job_order_.push_back(retry_id);

    Decision d = route(stored);
    d.outcome = Outcome::Wait;
    d.peer_id.reset();
    d.reason = "requeued after peer lost";
    record(stored, d);
    transition(stored, JobState::Waiting);
    stored.waiting_since = now_;
    registry_.wait_queues[device].push_front(retry_id);
  }
  drain_queue(device);
}

Decision Scheduler::route(const Job& job) const {
  const std::string& device = job.context.device_model;
  Decision d;
  d.job_id = job.job_id;
  d.at = now_;
  d.theta_w = config_.gate.theta_w;

  if (auto it = registry_.models.find(device); it != registry_.models.end()) {
    const DeviceModels& m = it->second;
    d.predicted_abs_error_w = predict_abs_error(m.reliability, job.features);
    d.hardware_samples = m.reliability.samples();
    // The energy model is never consulted before it has seen d + 1 samples.
    const auto min_samples = static_cast<std::uint64_t>(m.energy.weights().size());
    d.gate_passed = is_reliable(m.reliability, job.features) &&
                    m.energy.samples() >= min_samples;
  }

  bool any_super = false;
  bool any_provider = false;
  for (const auto& [id, peer] : registry_.peers) {
    if (peer.device_model != device) continue;
    (peer.role == PeerRole::SuperProvider ? any_super : any_provider) = true;
  }
  if (!any_super && !any_provider) {
    d.outcome = Outcome::Fail;
    d.reason = "no capacity for device model";
    return d;
  }
  if (const PeerRecord* hw = pick_idle(device, PeerRole::SuperProvider)) {
    d.outcome = Outcome::AssignHardware;
    d.peer_id = hw->peer_id;
    return d;
  }
  if (d.gate_passed) {
    if (const PeerRecord* sw = pick_idle(device, PeerRole::Provider)) {
      d.outcome = Outcome::AssignModel;
      d.peer_id = sw->peer_id;
      return d;
    }
  } else if (!any_super) {
    d.outcome = Outcome::Fail;
    d.reason = "no super-provider for device model and estimate unreliable";
    return d;
  }
  d.outcome = Outcome::Wait;
  return d;
}

const Job& Scheduler::job(const std::string& job_id) const {
  const Job* j = find_job(job_id);
  if (!j) throw SchedulerError("unknown job '" + job_id + "'");
  return *j;
}

const Job* Scheduler::find_job(const std::string& job_id) const {
  auto it = jobs_.find(job_id);
  return it == jobs_.end() ? nullptr : &it->second;
}

std::optional<std::size_t> Scheduler::queue_position(const std::string& job_id) const {
  const Job* j = find_job(job_id);
  if (!j || j->state != JobState::Waiting) return std::nullopt;
  auto q = registry_.wait_queues.find(j->context.device_model);
  if (q == registry_.wait_queues.end()) return std::nullopt;
  auto it = std::find(q->second.begin(), q->second.end(), job_id);
  if (it == q->second.end()) return std::nullopt;
  return static_cast<std::size_t>(it - q->second.begin());
}

const DeviceModels* Scheduler::models(const std::string& device_model) const {
  auto it = registry_.models.find(device_model);
  return it == registry_.models.end() ? nullptr : &it->second;
}

std::vector<Decision> Scheduler::take_decisions() {
  std::vector<Decision> out;
  out.swap(outbox_);
  return out;
}

Job& Scheduler::mutable_job(const std::string& job_id) {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw SchedulerError("unknown job '" + job_id + "'");
  return it->second;
}

DeviceModels& Scheduler::ensure_models(const std::string& device_model) {
  auto it = registry_.models.find(device_model);
  if (it != registry_.models.end()) return it->second;
  const std::size_t dim = config_.layout().dimension();
  return registry_.models
      .emplace(device_model,
               DeviceModels{make_energy_model(device_model, dim, config_.gate),
                            make_reliability_model(device_model, dim, config_.gate)})
      .first->second;
}

void Scheduler::transition(Job& job, JobState next) {
  if (!is_legal_transition(job.state, next))
    throw std::logic_error("illegal job transition " +
                           std::string(to_string(job.state)) + " -> " +
                           std::string(to_string(next)));
  job.state = next;
  job.history.push_back(next);
}

void Scheduler::record(Job& job, Decision decision) {
  job.decisions.push_back(decision);
  outbox_.push_back(std::move(decision));
}

void Scheduler::apply(Job& job, const Decision& d) {
  switch (d.outcome) {
    case Outcome::AssignHardware:
    case Outcome::AssignModel: {
      PeerRecord& peer = registry_.peers.at(*d.peer_id);
      transition(job, d.outcome == Outcome::AssignHardware ? JobState::AssignedHardware
                                                           : JobState::AssignedModel);
      peer.state = PeerState::Busy;
      peer.current_job = job.job_id;
      peer.last_assigned = ++assignment_counter_;
      job.peer_id = peer.peer_id;
      transition(job, JobState::Running);
      break;
    }
    case Outcome::Wait:
      if (job.state == JobState::Submitted) {
        transition(job, JobState::Waiting);
        job.waiting_since = now_;
        registry_.wait_queues[job.context.device_model].push_back(job.job_id);
      }
      break;
    case Outcome::Fail:
      fail_job(job, d.reason);
      break;
  }
}

void Scheduler::drain_queue(const std::string& device_model) {
  auto qit = registry_.wait_queues.find(device_model);
  if (qit == registry_.wait_queues.end()) return;
  auto& queue = qit->second;
  while (!queue.empty()) {
    Job& head = mutable_job(queue.front());
    Decision d = route(head);
    if (d.outcome == Outcome::Wait) break;  // head-of-line: FIFO per device
    queue.pop_front();
    record(head, d);
    apply(head, d);
  }
}

void Scheduler::fail_job(Job& job, const std::string& reason) {
  transition(job, JobState::Failed);
  job.failure_reason = reason;
}

void Scheduler::release_peer(const std::string& peer_id) {
  PeerRecord& peer = registry_.peers.at(peer_id);
  peer.current_job.reset();
  if (peer.state == PeerState::Busy) peer.state = PeerState::Idle;
}

const PeerRecord* Scheduler::pick_idle(const std::string& device_model,
                                       PeerRole role) const {
  const PeerRecord* best = nullptr;
  // Peers iterate in peer_id order, so strict < keeps the lexicographic tie-break.
  for (const auto& [id, peer] : registry_.peers) {
    if (peer.device_model != device_model || peer.role != role ||
        peer.state != PeerState::Idle)
      continue;
    if (!best || peer.last_assigned < best->last_assigned) best = &peer;
  }
  return best;
}

}  // namespace emaas
