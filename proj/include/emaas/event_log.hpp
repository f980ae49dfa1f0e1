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
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "emaas/scheduler.hpp"
#include "emaas/serialization.hpp"

namespace emaas {

enum class EventKind {
  JobSubmitted,
  Decision,
  PeerEvent,
  HardwareResult,
  ModelResult,
  ModelSnapshotRef,
};

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

struct PersistedEvent {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::JobSubmitted;
  std::uint64_t at = 0;  // scheduler clock when the event was applied
  Json payload;
};

Json to_json(const PersistedEvent& event);
PersistedEvent persisted_event_from_json(const Json& doc);

/// Payload builders shared by every producer of logs.
Json job_submitted_payload(const std::string& job_id, const AppManifest& manifest,
                           const ExecutionContext& context,
                           const std::string& request_token = {});
Json hardware_result_payload(const std::string& job_id, const std::string& peer_id,
                             double energy_j, double duration_s,
                             const std::optional<MeasurementRecord>& record);
Json model_result_payload(const std::string& job_id, const std::string& peer_id,
                          const MeasurementRecord& record);
Json snapshot_payload(const SchedulerConfig& config, const Registry& registry,
                      const std::string& path = {});

/// Append-only event sequence with dense seq numbers starting at 1. When a
/// file is attached every append is written, flushed and fsync'ed before
/// returning.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::filesystem::path& path, std::uint64_t next_seq = 1);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;
  EventLog(EventLog&& other) noexcept;
  EventLog& operator=(EventLog&& other) noexcept;

  const PersistedEvent& append(EventKind kind, std::uint64_t at, Json payload);

  const std::vector<PersistedEvent>& events() const { return events_; }
  std::uint64_t last_seq() const { return next_seq_ - 1; }
  void keep_in_memory(bool keep) { keep_in_memory_ = keep; }

 private:
  std::vector<PersistedEvent> events_;
  std::FILE* file_ = nullptr;
  bool keep_in_memory_ = true;
  std::uint64_t next_seq_ = 1;
};

/// Writes events as JSON lines.
void write_jsonl(const std::vector<PersistedEvent>& events, std::ostream& out);

/// Replay aborted at `seq()`.
class ReplayError : public std::runtime_error {
 public:
  ReplayError(std::uint64_t seq, const std::string& message)
      : std::runtime_error("seq " + std::to_string(seq) + ": " + message), seq_(seq) {}
  std::uint64_t seq() const { return seq_; }

 private:
  std::uint64_t seq_;
};

struct LoadedLog {
  std::vector<PersistedEvent> events;
  bool truncated = false;  // final line was cut short and ignored
};

/// Parses a JSON-lines log. A malformed line in the middle raises ReplayError
/// with the seq it should have carried; an unterminated malformed final line
/// is dropped and reported as truncation.
LoadedLog read_jsonl(std::istream& in);
LoadedLog read_jsonl_file(const std::filesystem::path& path);

struct ReplayResult {
  Scheduler scheduler;
  std::size_t events_applied = 0;
  std::size_t decisions_verified = 0;
  std::size_t snapshots_checked = 0;
  double max_snapshot_difference = 0.0;
  bool snapshots_match = true;
  bool partial = false;  // log ended with derived decisions not yet logged
  std::vector<Decision> unlogged{};  // those decisions, in order
};

/// Re-drives a scheduler from the logged inputs (submissions, peer events,
/// results), checking every logged Decision and ModelSnapshotRef against the
/// re-derived state. Without `config`, the first ModelSnapshotRef supplies it.
ReplayResult replay(const std::vector<PersistedEvent>& events,
                    std::optional<SchedulerConfig> config = std::nullopt,
                    double snapshot_tolerance = 1e-12);

}  // namespace emaas
