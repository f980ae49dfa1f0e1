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

#include "emaas/event_log.hpp"

#include <unistd.h>

#include <deque>
#include <fstream>
#include <istream>
#include <ostream>

namespace emaas {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::JobSubmitted: return "JobSubmitted";
    case EventKind::Decision: return "Decision";
    case EventKind::PeerEvent: return "PeerEvent";
    case EventKind::HardwareResult: return "HardwareResult";
    case EventKind::ModelResult: return "ModelResult";
    case EventKind::ModelSnapshotRef: return "ModelSnapshotRef";
  }
  return "unknown";
}

EventKind parse_event_kind(std::string_view text) {
  for (auto k : {EventKind::JobSubmitted, EventKind::Decision, EventKind::PeerEvent,
                 EventKind::HardwareResult, EventKind::ModelResult,
                 EventKind::ModelSnapshotRef})
    if (to_string(k) == text) return k;
  throw ContractViolation("unknown event kind '" + std::string(text) + "'");
}

Json to_json(const PersistedEvent& e) {
  return Json{{"seq", e.seq},
              {"kind", std::string(to_string(e.kind))},
              {"at", e.at},
              {"payload", e.payload}};
}

PersistedEvent persisted_event_from_json(const Json& doc) {
  PersistedEvent e;
  e.seq = doc.at("seq").get<std::uint64_t>();
  e.kind = parse_event_kind(doc.at("kind").get<std::string>());
  e.at = doc.at("at").get<std::uint64_t>();
  e.payload = doc.at("payload");
  return e;
}

Json job_submitted_payload(const std::string& job_id, const AppManifest& manifest,
                           const ExecutionContext& context,
                           const std::string& request_token) {
  Json j{{"job_id", job_id}, {"manifest", to_json(manifest)}, {"context", to_json(context)}};
  if (!request_token.empty()) j["request_token"] = request_token;
  return j;
}

Json hardware_result_payload(const std::string& job_id, const std::string& peer_id,
                             double energy_j, double duration_s,
                             const std::optional<MeasurementRecord>& record) {
  Json j{{"job_id", job_id},
         {"peer_id", peer_id},
         {"energy_j", energy_j},
         {"duration_s", duration_s}};
  j["record"] = record ? to_json(*record) : Json(nullptr);
  return j;
}

Json model_result_payload(const std::string& job_id, const std::string& peer_id,
                          const MeasurementRecord& record) {
  return Json{{"job_id", job_id}, {"peer_id", peer_id}, {"record", to_json(record)}};
}

Json snapshot_payload(const SchedulerConfig& config, const Registry& registry,
                      const std::string& path) {
  Json j{{"schema_version", kSchemaVersion},
         {"config", to_json(config)},
         {"models", models_to_json(registry)}};
  if (!path.empty()) j["path"] = path;
  return j;
}

// ------------------------------------------------------------------ EventLog

EventLog::EventLog(const std::filesystem::path& path, std::uint64_t next_seq)
    : next_seq_(next_seq) {
  file_ = std::fopen(path.c_str(), "a");
  if (!file_) throw std::runtime_error("cannot open event log " + path.string());
}

EventLog::~EventLog() {
  if (file_) std::fclose(file_);
}

EventLog::EventLog(EventLog&& other) noexcept
    : events_(std::move(other.events_)),
      file_(std::exchange(other.file_, nullptr)),
      keep_in_memory_(other.keep_in_memory_),
      next_seq_(other.next_seq_) {}

EventLog& EventLog::operator=(EventLog&& other) noexcept {
  if (this != &other) {
    if (file_) std::fclose(file_);
    events_ = std::move(other.events_);
    file_ = std::exchange(other.file_, nullptr);
    keep_in_memory_ = other.keep_in_memory_;
    next_seq_ = other.next_seq_;
  }
  return *this;
}

const PersistedEvent& EventLog::append(EventKind kind, std::uint64_t at, Json payload) {
  PersistedEvent e{next_seq_, kind, at, std::move(payload)};
  if (file_) {
    const std::string line = to_json(e).dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() ||
        std::fflush(file_) != 0 || ::fsync(::fileno(file_)) != 0)
      throw std::runtime_error("event log write failed at seq " + std::to_string(e.seq));
  }
  ++next_seq_;
  if (!keep_in_memory_) events_.clear();
  events_.push_back(std::move(e));
  return events_.back();
}

void write_jsonl(const std::vector<PersistedEvent>& events, std::ostream& out) {
  for (const auto& e : events) out << to_json(e).dump() << '\n';
}

LoadedLog read_jsonl(std::istream& in) {
  LoadedLog log;
  std::string line;
  std::uint64_t expected = 1;
  while (std::getline(in, line)) {
    const bool terminated = !in.eof();
    if (line.empty()) continue;
    try {
      log.events.push_back(persisted_event_from_json(Json::parse(line)));
      expected = log.events.back().seq + 1;
    } catch (const std::exception& e) {
      if (!terminated) {
        log.truncated = true;
        break;
      }
      throw ReplayError(expected, std::string("corrupt event: ") + e.what());
    }
  }
  return log;
}

LoadedLog read_jsonl_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_jsonl(in);
}

// -------------------------------------------------------------------- replay

namespace {

void check_record(std::uint64_t seq, const MeasurementRecord& derived, const Json& logged) {
  const MeasurementRecord r = record_from_json(logged);
  if (r.energy_j != derived.energy_j || r.epsilon != derived.epsilon ||
      r.source != derived.source)
    throw ReplayError(seq, "measurement record for " + derived.job_id +
                               " differs from the re-derived one");
}

SchedulerConfig config_for(const std::vector<PersistedEvent>& events,
                           const std::optional<SchedulerConfig>& given) {
  if (given) return *given;
  for (const auto& e : events) {
    if (e.kind == EventKind::ModelSnapshotRef) {
      try {
        return scheduler_config_from_json(e.payload.at("config"));
      } catch (const std::exception& ex) {
        throw ReplayError(e.seq, std::string("bad snapshot config: ") + ex.what());
      }
    }
  }
  return SchedulerConfig{};
}

}  // namespace

ReplayResult replay(const std::vector<PersistedEvent>& events,
                    std::optional<SchedulerConfig> config, double snapshot_tolerance) {
  ReplayResult result{Scheduler(config_for(events, config))};
  Scheduler& s = result.scheduler;
  std::deque<Decision> derived;
  auto collect = [&] {
    for (auto& d : s.take_decisions()) derived.push_back(std::move(d));
  };

  std::uint64_t expected_seq = 1;
  for (const auto& e : events) {
    if (e.seq != expected_seq)
      throw ReplayError(expected_seq, "missing event (found seq " + std::to_string(e.seq) + ")");
    ++expected_seq;
    try {
      if (e.at > s.now()) {
        s.advance_clock(e.at);
        collect();
      }
      const Json& p = e.payload;
      switch (e.kind) {
        case EventKind::JobSubmitted:
          s.submit(p.at("job_id").get<std::string>(), manifest_from_json(p.at("manifest")),
                   context_from_json(p.at("context")));
          break;
        case EventKind::PeerEvent:
          s.peer_event(peer_event_from_json(p));
          break;
        case EventKind::HardwareResult: {
          auto rec = s.complete_hardware(p.at("job_id").get<std::string>(),
                                         p.at("peer_id").get<std::string>(),
                                         p.at("energy_j").get<double>(),
                                         p.at("duration_s").get<double>());
          if (rec.has_value() == p.at("record").is_null())
            throw ReplayError(e.seq, "hardware result outcome differs from the log");
          if (rec) check_record(e.seq, *rec, p.at("record"));
          break;
        }
        case EventKind::ModelResult: {
          const auto rec = s.complete_model(p.at("job_id").get<std::string>(),
                                            p.at("peer_id").get<std::string>());
          check_record(e.seq, rec, p.at("record"));
          break;
        }
        case EventKind::Decision: {
          const Decision logged = decision_from_json(p);
          if (derived.empty())
            throw ReplayError(e.seq, "logged decision for " + logged.job_id +
                                         " was not re-derived");
          if (!(derived.front() == logged))
            throw ReplayError(e.seq, "decision for " + logged.job_id +
                                         " differs from the re-derived one");
          derived.pop_front();
          ++result.decisions_verified;
          break;
        }
        case EventKind::ModelSnapshotRef: {
          const double diff =
              max_weight_difference(models_to_json(s.registry()), p.at("models"));
          ++result.snapshots_checked;
          result.max_snapshot_difference = std::max(result.max_snapshot_difference, diff);
          if (!(diff <= snapshot_tolerance)) result.snapshots_match = false;
          break;
        }
      }
    } catch (const ReplayError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ReplayError(e.seq, ex.what());
    }
    collect();
    ++result.events_applied;
  }
  result.partial = !derived.empty();
  result.unlogged.assign(derived.begin(), derived.end());
  return result;
}

}  // namespace emaas
