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

#include "emaas/broker.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace emaas {

ClockMs steady_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  };
}

BrokerConfig broker_config_from_json(const Json& doc) {
  if (!doc.is_object()) throw ValidationError("$", "expected an object");
  BrokerConfig c;
  c.scheduler = scheduler_config_from_json(doc);
  auto string_field = [&](const char* name, auto&& apply) {
    if (auto it = doc.find(name); it != doc.end() && !it->is_null()) {
      if (!it->is_string()) throw ValidationError(name, "expected a string");
      apply(it->template get<std::string>());
    }
  };
  string_field("listen", [&](const std::string& listen) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos || colon == 0)
      throw ValidationError("listen", "expected host:port");
    int port = -1;
    try {
      std::size_t used = 0;
      port = std::stoi(listen.substr(colon + 1), &used);
      if (used != listen.size() - colon - 1) port = -1;
    } catch (const std::exception&) {
    }
    if (port < 0 || port > 65535) throw ValidationError("listen", "invalid port");
    c.host = listen.substr(0, colon);
    c.port = port;
  });
  string_field("log_path", [&](const std::string& p) { c.log_path = p; });
  string_field("client_token", [&](const std::string& t) { c.client_token = t; });
  string_field("peer_token", [&](const std::string& t) { c.peer_token = t; });
  if (auto it = doc.find("snapshot_every"); it != doc.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
      throw ValidationError("snapshot_every", "expected a non-negative integer");
    c.snapshot_every = it->get<std::uint64_t>();
  }
  if (auto it = doc.find("heartbeat_timeout_s"); it != doc.end()) {
    if (!it->is_number() || !(it->get<double>() > 0.0) || !std::isfinite(it->get<double>()))
      throw ValidationError("heartbeat_timeout_s", "expected a positive number");
    c.heartbeat_timeout_ms = static_cast<std::int64_t>(std::llround(it->get<double>() * 1000.0));
  }
  return c;
}

namespace {

std::optional<JobState> assignment_kind(const Job& job) {
  for (auto it = job.history.rbegin(); it != job.history.rend(); ++it)
    if (*it == JobState::AssignedHardware || *it == JobState::AssignedModel) return *it;
  return std::nullopt;
}

}  // namespace

Broker::Broker(BrokerConfig config, ClockMs clock)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      sched_(std::make_unique<Scheduler>(config_.scheduler)) {
  std::uint64_t next_seq = 1;
  if (!config_.log_path.empty() && std::filesystem::exists(config_.log_path)) {
    LoadedLog loaded = read_jsonl_file(config_.log_path);
    if (loaded.truncated) {
      // Drop the torn tail so new appends start on a clean line.
      const auto tmp = config_.log_path.string() + ".tmp";
      {
        std::ofstream out(tmp, std::ios::trunc);
        write_jsonl(loaded.events, out);
        if (!out) throw std::runtime_error("cannot rewrite " + config_.log_path.string());
      }
      std::filesystem::rename(tmp, config_.log_path);
    }
    if (!loaded.events.empty()) next_seq = loaded.events.back().seq + 1;
    restore(loaded);
    log_ = config_.log_path.empty() ? EventLog() : EventLog(config_.log_path, next_seq);
    auto result = replay(loaded.events, config_.scheduler);
    for (const auto& d : result.unlogged) log_.append(EventKind::Decision, d.at, to_json(d));
    sched_ = std::make_unique<Scheduler>(std::move(result.scheduler));
    sched_->take_decisions();
  } else if (!config_.log_path.empty()) {
    log_ = EventLog(config_.log_path, next_seq);
  }
  const std::int64_t now = clock_();
  for (const auto& [id, peer] : sched_->registry().peers) last_seen_ms_[id] = now;
  snapshot();
}

Broker::~Broker() {
  try {
    snapshot();
  } catch (...) {
  }
}

void Broker::restore(const LoadedLog& loaded) {
  for (const auto& e : loaded.events) {
    if (e.kind == EventKind::JobSubmitted) {
      ++job_counter_;
      if (auto it = e.payload.find("request_token"); it != e.payload.end())
        tokens_[it->get<std::string>()] = e.payload.at("job_id").get<std::string>();
    } else if (e.kind == EventKind::HardwareResult) {
      ++hardware_results_;
    } else if (e.kind == EventKind::ModelSnapshotRef) {
      if (auto it = e.payload.find("config"); it != e.payload.end() &&
                                              *it != to_json(config_.scheduler))
        throw std::runtime_error("log " + config_.log_path.string() +
                                 " was written with a different scheduler configuration");
    }
  }
}

void Broker::tick() {
  sched_->advance_clock(sched_->now() + 1);
  log_decisions();
}

void Broker::log_decisions() {
  for (const auto& d : sched_->take_decisions())
    log_.append(EventKind::Decision, sched_->now(), to_json(d));
}

void Broker::after_hardware_result() {
  if (config_.snapshot_every > 0 && ++hardware_results_ % config_.snapshot_every == 0)
    log_.append(EventKind::ModelSnapshotRef, sched_->now(),
                snapshot_payload(sched_->config(), sched_->registry()));
}

Broker::Submitted Broker::submit(const AppManifest& manifest, const ExecutionContext& context,
                                 const std::string& request_token) {
  std::lock_guard lock(mu_);
  if (!request_token.empty()) {
    if (auto it = tokens_.find(request_token); it != tokens_.end())
      return {it->second, false, status_locked(sched_->job(it->second))};
  }
  if (context.device_model.empty())
    throw ValidationError("context.device_model", "must not be empty");
  // Feature extraction is the scheduler's only manifest check; run it before
  // the clock moves so a rejected request leaves no trace.
  extract_features(manifest, sched_->config().vocab, sched_->config().complexity_names);

  char buf[32];
  std::snprintf(buf, sizeof(buf), "job-%06llu",
                static_cast<unsigned long long>(job_counter_ + 1));
  const std::string job_id = buf;
  tick();
  const Job& job = sched_->submit(job_id, manifest, context);
  ++job_counter_;
  log_.append(EventKind::JobSubmitted, sched_->now(),
              job_submitted_payload(job_id, manifest, context, request_token));
  log_decisions();
  if (!request_token.empty()) tokens_[request_token] = job_id;
  return {job_id, true, status_locked(job)};
}

Broker::Submitted Broker::submit_json(const Json& body) {
  if (!body.is_object()) throw ValidationError("$", "expected an object");
  auto m = body.find("manifest");
  if (m == body.end()) throw ValidationError("manifest", "is required");
  auto c = body.find("context");
  if (c == body.end()) throw ValidationError("context", "is required");
  const AppManifest manifest = manifest_from_json(*m, "manifest");
  const ExecutionContext context = context_from_json(*c, "context");
  std::string token;
  if (auto t = body.find("request_token"); t != body.end() && !t->is_null()) {
    if (!t->is_string()) throw ValidationError("request_token", "expected a string");
    token = t->get<std::string>();
  }
  return submit(manifest, context, token);
}

Json Broker::status(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  const Job* job = sched_->find_job(job_id);
  if (!job) throw NotFound("unknown job '" + job_id + "'");
  return status_locked(*job);
}

Json Broker::status_locked(const Job& job) const {
  Json trace = Json::array();
  for (const auto& d : job.decisions) trace.push_back(to_json(d));
  const auto pos = sched_->queue_position(job.job_id);
  Json s{{"job_id", job.job_id},
         {"state", to_string(job.state)},
         {"device_model", job.context.device_model},
         {"app_id", job.manifest.app_id},
         {"submitted_at", job.submitted_at},
         {"queue_position", pos ? Json(*pos + 1) : Json(nullptr)},
         {"peer_id", job.peer_id ? Json(*job.peer_id) : Json(nullptr)},
         {"record", job.record ? to_json(*job.record) : Json(nullptr)},
         {"decision_trace", trace}};
  if (job.state == JobState::Failed) s["failure_reason"] = job.failure_reason;
  if (job.retry_of) s["retry_of"] = *job.retry_of;
  if (job.resubmitted_as) s["resubmitted_as"] = *job.resubmitted_as;
  return s;
}

Json Broker::assignment_locked(const PeerRecord& peer) const {
  if (!peer.current_job) return nullptr;
  const Job& job = sched_->job(*peer.current_job);
  const auto kind = assignment_kind(job);
  return {{"job_id", job.job_id},
          {"kind", kind == JobState::AssignedHardware ? "hardware" : "model"},
          {"manifest", to_json(job.manifest)},
          {"context", to_json(job.context)}};
}

Json Broker::register_peer(const std::string& peer_id, PeerRole role,
                           const std::string& device_model) {
  std::lock_guard lock(mu_);
  if (peer_id.empty()) throw ValidationError("peer_id", "must not be empty");
  if (device_model.empty()) throw ValidationError("device_model", "must not be empty");
  if (sched_->registry().peers.count(peer_id))
    throw SchedulerError("peer '" + peer_id + "' is already registered");
  const PeerEvent e{PeerEventKind::Register, peer_id, role, device_model};
  tick();
  sched_->peer_event(e);
  log_.append(EventKind::PeerEvent, sched_->now(), to_json(e));
  log_decisions();
  last_seen_ms_[peer_id] = clock_();
  const PeerRecord& p = sched_->registry().peers.at(peer_id);
  return {{"peer_id", peer_id}, {"state", to_string(p.state)}, {"assignment", assignment_locked(p)}};
}

Json Broker::heartbeat(const std::string& peer_id) {
  std::lock_guard lock(mu_);
  auto it = sched_->registry().peers.find(peer_id);
  if (it == sched_->registry().peers.end()) throw NotFound("unknown peer '" + peer_id + "'");
  last_seen_ms_[peer_id] = clock_();
  if (it->second.state == PeerState::Offline) {
    const PeerEvent e{PeerEventKind::Heartbeat, peer_id, it->second.role, {}};
    tick();
    sched_->peer_event(e);
    log_.append(EventKind::PeerEvent, sched_->now(), to_json(e));
    log_decisions();
  }
  const PeerRecord& p = sched_->registry().peers.at(peer_id);
  return {{"peer_id", peer_id}, {"state", to_string(p.state)}, {"assignment", assignment_locked(p)}};
}

Json Broker::result(const std::string& peer_id, const std::string& job_id,
                    std::optional<double> energy_j, std::optional<double> duration_s) {
  std::lock_guard lock(mu_);
  const Job* job = sched_->find_job(job_id);
  if (!job) throw NotFound("unknown job '" + job_id + "'");
  if (!sched_->registry().peers.count(peer_id)) throw NotFound("unknown peer '" + peer_id + "'");
  if (job->peer_id != peer_id || job->state != JobState::Running)
    throw SchedulerError("peer '" + peer_id + "' is not assignee of job '" + job_id + "'");
  last_seen_ms_[peer_id] = clock_();

  if (assignment_kind(*job) == JobState::AssignedHardware) {
    if (!energy_j) throw ValidationError("energy_j", "is required for hardware jobs");
    if (!duration_s) throw ValidationError("duration_s", "is required for hardware jobs");
    tick();
    const auto rec = sched_->complete_hardware(job_id, peer_id, *energy_j, *duration_s);
    log_.append(EventKind::HardwareResult, sched_->now(),
                hardware_result_payload(job_id, peer_id, *energy_j, *duration_s, rec));
    log_decisions();
    if (rec) after_hardware_result();
  } else {
    tick();
    const auto rec = sched_->complete_model(job_id, peer_id);
    log_.append(EventKind::ModelResult, sched_->now(), model_result_payload(job_id, peer_id, rec));
    log_decisions();
  }
  const Job& done = sched_->job(job_id);
  return {{"job_id", job_id},
          {"state", to_string(done.state)},
          {"record", done.record ? to_json(*done.record) : Json(nullptr)}};
}

std::size_t Broker::reap() {
  std::lock_guard lock(mu_);
  const std::int64_t now = clock_();
  std::vector<std::string> stale;
  for (const auto& [id, peer] : sched_->registry().peers) {
    if (peer.state == PeerState::Offline) continue;
    auto seen = last_seen_ms_.find(id);
    if (seen == last_seen_ms_.end() || now - seen->second > config_.heartbeat_timeout_ms)
      stale.push_back(id);
  }
  for (const auto& id : stale) {
    const PeerEvent e{PeerEventKind::Offline, id, sched_->registry().peers.at(id).role, {}};
    tick();
    sched_->peer_event(e);
    log_.append(EventKind::PeerEvent, sched_->now(), to_json(e));
    log_decisions();
  }
  return stale.size();
}

Json Broker::models(const std::string& device_model) const {
  std::lock_guard lock(mu_);
  const DeviceModels* m = sched_->models(device_model);
  if (!m) throw NotFound("no model for device '" + device_model + "'");
  const GateConfig& g = sched_->config().gate;
  return {{"device_model", device_model},
          {"energy", {{"weights", to_json(m->energy.weights())}, {"samples", m->energy.samples()}}},
          {"reliability",
           {{"weights", to_json(m->reliability.weights())}, {"samples", m->reliability.samples()}}},
          {"theta_w", g.theta_w},
          {"n_min", g.n_min}};
}

Json Broker::metrics() const {
  std::lock_guard lock(mu_);
  std::map<std::string, std::uint64_t> states;
  std::uint64_t hardware = 0, model = 0;
  for (const auto& id : sched_->job_order()) {
    const Job& j = sched_->job(id);
    ++states[std::string(to_string(j.state))];
    if (j.state == JobState::Completed && j.record)
      ++(j.record->source == MeasurementSource::Hardware ? hardware : model);
  }
  Json queues = Json::object();
  for (const auto& [device, q] : sched_->registry().wait_queues) queues[device] = q.size();
  std::map<std::string, std::uint64_t> peers;
  for (const auto& [id, p] : sched_->registry().peers) ++peers[std::string(to_string(p.state))];
  Json devices = Json::object();
  for (const auto& [device, m] : sched_->registry().models)
    devices[device] = {{"energy_samples", m.energy.samples()},
                       {"reliability_samples", m.reliability.samples()}};
  const std::uint64_t done = hardware + model;
  return {{"jobs", states},
          {"completed_hardware", hardware},
          {"completed_model", model},
          {"hardware_fraction",
           done ? Json(static_cast<double>(hardware) / static_cast<double>(done)) : Json(nullptr)},
          {"queue_depths", queues},
          {"peers", peers},
          {"models", devices},
          {"theta_w", sched_->config().gate.theta_w},
          {"n_min", sched_->config().gate.n_min},
          {"clock", sched_->now()},
          {"last_seq", log_.last_seq()}};
}

void Broker::snapshot() {
  std::lock_guard lock(mu_);
  log_.append(EventKind::ModelSnapshotRef, sched_->now(),
              snapshot_payload(sched_->config(), sched_->registry()));
}

std::vector<PersistedEvent> Broker::events() const {
  std::lock_guard lock(mu_);
  return log_.events();
}

std::uint64_t Broker::last_seq() const {
  std::lock_guard lock(mu_);
  return log_.last_seq();
}

}  // namespace emaas
