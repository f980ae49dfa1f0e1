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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "emaas/event_log.hpp"
#include "emaas/simulator.hpp"

namespace emaas {
namespace {

const std::vector<PersistedEvent>& sample_log() {
  static const std::vector<PersistedEvent> events = [] {
    ScenarioConfig c = default_scenario();
    c.seed = 17;
    c.duration_events = 300;
    c.windows = 3;
    c.snapshot_every = 20;
    return run_scenario(c).events;
  }();
  return events;
}

std::size_t first_of(const std::vector<PersistedEvent>& events, EventKind kind,
                     std::size_t from = 0) {
  for (std::size_t i = from; i < events.size(); ++i)
    if (events[i].kind == kind) return i;
  return events.size();
}

std::uint64_t replay_error_seq(const std::vector<PersistedEvent>& events) {
  try {
    replay(events);
  } catch (const ReplayError& e) {
    return e.seq();
  }
  return 0;
}

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("emaas-" + name + "-" +
                                                     std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  std::filesystem::remove(p);
  return p;
}

TEST(PersistedEventJson, RoundTrips) {
  for (const auto& e : sample_log()) {
    const PersistedEvent back = persisted_event_from_json(to_json(e));
    EXPECT_EQ(back.seq, e.seq);
    EXPECT_EQ(back.kind, e.kind);
    EXPECT_EQ(back.at, e.at);
    EXPECT_EQ(back.payload, e.payload);
  }
}

TEST(EventKindText, ParsesEveryKindAndRejectsUnknown) {
  for (auto k : {EventKind::JobSubmitted, EventKind::Decision, EventKind::PeerEvent,
                 EventKind::HardwareResult, EventKind::ModelResult, EventKind::ModelSnapshotRef})
    EXPECT_EQ(parse_event_kind(to_string(k)), k);
  EXPECT_ANY_THROW(parse_event_kind("Bogus"));
}

TEST(Replay, EmptyLogIsANoOp) {
  const ReplayResult r = replay({});
  EXPECT_EQ(r.events_applied, 0u);
  EXPECT_EQ(r.decisions_verified, 0u);
  EXPECT_FALSE(r.partial);
  EXPECT_TRUE(r.scheduler.job_order().empty());
}

TEST(Replay, FullLogMatches) {
  const ReplayResult r = replay(sample_log());
  EXPECT_EQ(r.events_applied, sample_log().size());
  EXPECT_TRUE(r.snapshots_match);
  EXPECT_EQ(r.max_snapshot_difference, 0.0);
  EXPECT_FALSE(r.partial);
}

TEST(Replay, GapAbortsAtTheMissingSeq) {
  auto events = sample_log();
  events.erase(events.begin() + 2);
  EXPECT_EQ(replay_error_seq(events), 3u);
}

TEST(Replay, TamperedDecisionIsReportedAtItsSeq) {
  auto events = sample_log();
  const std::size_t i = first_of(events, EventKind::Decision);
  ASSERT_LT(i, events.size());
  events[i].payload["predicted_abs_error_w"] = 123.0;
  EXPECT_EQ(replay_error_seq(events), events[i].seq);
}

TEST(Replay, TamperedModelResultIsReported) {
  auto events = sample_log();
  const std::size_t i = first_of(events, EventKind::ModelResult);
  ASSERT_LT(i, events.size());
  events[i].payload["record"]["energy_j"] = events[i].payload["record"]["energy_j"].get<double>() + 1.0;
  EXPECT_EQ(replay_error_seq(events), events[i].seq);
}

TEST(Replay, SnapshotDriftBeyondToleranceIsAMismatch) {
  auto events = sample_log();
  std::size_t i = first_of(events, EventKind::ModelSnapshotRef, 1);
  while (i < events.size() && events[i].payload["models"].empty())
    i = first_of(events, EventKind::ModelSnapshotRef, i + 1);
  ASSERT_LT(i, events.size());
  auto& models = events[i].payload["models"];
  auto& w = models.begin().value()["energy"]["weights"][0];
  w = w.get<double>() + 1e-9;
  const ReplayResult r = replay(events);
  EXPECT_FALSE(r.snapshots_match);
  EXPECT_NEAR(r.max_snapshot_difference, 1e-9, 1e-12);
  EXPECT_TRUE(replay(events, std::nullopt, 1e-6).snapshots_match);
}

TEST(Replay, LogCutBeforeDecisionsIsPartial) {
  auto events = sample_log();
  const std::size_t i = first_of(events, EventKind::JobSubmitted);
  ASSERT_LT(i + 1, events.size());
  ASSERT_EQ(events[i + 1].kind, EventKind::Decision);
  events.resize(i + 1);
  const ReplayResult r = replay(events);
  EXPECT_TRUE(r.partial);
  EXPECT_EQ(r.scheduler.job_order().size(), 1u);
}

TEST(Replay, ResultForUnknownJobAbortsAtThatSeq) {
  auto events = sample_log();
  const std::size_t i = first_of(events, EventKind::HardwareResult);
  ASSERT_LT(i, events.size());
  events[i].payload["job_id"] = "job-nope";
  EXPECT_EQ(replay_error_seq(events), events[i].seq);
}

TEST(Jsonl, WriteThenReadRoundTrips) {
  std::stringstream buf;
  write_jsonl(sample_log(), buf);
  const LoadedLog loaded = read_jsonl(buf);
  EXPECT_FALSE(loaded.truncated);
  ASSERT_EQ(loaded.events.size(), sample_log().size());
  EXPECT_EQ(to_json(loaded.events.back()), to_json(sample_log().back()));
}

TEST(Jsonl, CorruptMiddleLineNamesTheExpectedSeq) {
  std::stringstream out;
  write_jsonl(sample_log(), out);
  std::string text = out.str();
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  lines[4] = "{not json";
  std::stringstream corrupt;
  for (const auto& l : lines) corrupt << l << '\n';
  try {
    read_jsonl(corrupt);
    FAIL() << "corrupt line accepted";
  } catch (const ReplayError& e) {
    EXPECT_EQ(e.seq(), 5u);
  }
}

TEST(Jsonl, UnterminatedTornFinalLineIsTruncation) {
  std::stringstream out;
  write_jsonl(sample_log(), out);
  std::string text = out.str();
  text.resize(text.size() - 20);
  std::stringstream torn(text);
  const LoadedLog loaded = read_jsonl(torn);
  EXPECT_TRUE(loaded.truncated);
  EXPECT_EQ(loaded.events.size(), sample_log().size() - 1);
}

TEST(EventLogFile, AppendsDurablyAndResumesSeq) {
  const auto path = temp_file("log");
  {
    EventLog log(path);
    log.append(EventKind::PeerEvent, 0, to_json(PeerEvent{PeerEventKind::Register, "p", PeerRole::Provider, "d"}));
    log.append(EventKind::PeerEvent, 1, to_json(PeerEvent{PeerEventKind::Heartbeat, "p", PeerRole::Provider, ""}));
  }
  {
    EventLog log(path, 3);
    EXPECT_EQ(log.append(EventKind::PeerEvent, 2, to_json(PeerEvent{PeerEventKind::Offline, "p", PeerRole::Provider, ""})).seq, 3u);
  }
  const LoadedLog loaded = read_jsonl_file(path);
  ASSERT_EQ(loaded.events.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(loaded.events[i].seq, i + 1);
  std::filesystem::remove(path);
}

TEST(EventLogFile, MissingFileIsAnError) {
  EXPECT_ANY_THROW(read_jsonl_file("/nonexistent/emaas/log.jsonl"));
}

}  // namespace
}  // namespace emaas
