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

#include <gtest/gtest.h>

#include <random>

#include "scheduler_invariants.hpp"

namespace emaas {
namespace {

SchedulerConfig small_config(double theta = 10.0, std::uint64_t n_min = 1) {
  SchedulerConfig cfg;
  cfg.vocab = ApiVocabulary({"a", "b"});
  cfg.complexity_names = {"cx"};
  cfg.gate.theta_w = theta;
  cfg.gate.n_min = n_min;
  return cfg;
}

AppManifest manifest(std::int64_t a, std::int64_t b, double cx = 1.0,
                     double duration = 10.0) {
  return AppManifest{"app", {{"a", a}, {"b", b}}, {{"cx", cx}}, {{"t0", duration}}};
}

ExecutionContext on(const std::string& device) {
  return ExecutionContext{device, "13", 33, "espresso"};
}

void add_peer(Scheduler& s, const std::string& id, PeerRole role,
              const std::string& device) {
  s.peer_event({PeerEventKind::Register, id, role, device});
}

// Feeds `count` hardware results through super-provider `sp` on `device`,
// making the gate pass for apps like manifest(1, 1).
void train(Scheduler& s, const std::string& sp, const std::string& device,
           int count) {
  static int serial = 0;
  for (int i = 0; i < count; ++i) {
    const std::string id = "train-" + std::to_string(serial++);
    const Job& j = s.submit(id, manifest(1 + i % 3, 1 + (i / 3) % 2, 1.0 + i % 2), on(device));
    ASSERT_EQ(j.state, JobState::Running);
    ASSERT_EQ(j.peer_id, sp);
    s.complete_hardware(id, sp, 2.0 * 10.0, 10.0);
  }
  s.take_decisions();
}

TEST(Route, IdleSuperProviderGetsHardware) {
  Scheduler s(small_config());
  add_peer(s, "sp-x", PeerRole::SuperProvider, "X");
  add_peer(s, "p-x", PeerRole::Provider, "X");
  const Job& j = s.submit("j1", manifest(1, 1), on("X"));
  EXPECT_EQ(j.state, JobState::Running);
  EXPECT_EQ(j.peer_id, "sp-x");
  ASSERT_EQ(j.decisions.size(), 1u);
  EXPECT_EQ(j.decisions[0].outcome, Outcome::AssignHardware);
}

TEST(Route, BusySuperProviderAndReliableModelGoesToProvider) {
  Scheduler s(small_config());
  add_peer(s, "sp-y", PeerRole::SuperProvider, "Y");
  add_peer(s, "p-y", PeerRole::Provider, "Y");
  train(s, "sp-y", "Y", 12);
  s.submit("busy", manifest(2, 1), on("Y"));  // occupies sp-y
  const Job& j = s.submit("j2", manifest(1, 1), on("Y"));
  EXPECT_EQ(j.decisions.back().outcome, Outcome::AssignModel);
  EXPECT_TRUE(j.decisions.back().gate_passed);
  EXPECT_EQ(j.peer_id, "p-y");
  EXPECT_EQ(j.history, (std::vector<JobState>{JobState::Submitted,
                                               JobState::AssignedModel,
                                               JobState::Running}));
}

TEST(Route, BusySuperProviderAndUnreliableModelWaits) {
  Scheduler s(small_config(0.25, 30));
  add_peer(s, "sp-y", PeerRole::SuperProvider, "Y");
  add_peer(s, "p-y", PeerRole::Provider, "Y");
  s.submit("busy", manifest(2, 1), on("Y"));
  const Job& j = s.submit("j3", manifest(1, 1), on("Y"));
  EXPECT_EQ(j.state, JobState::Waiting);
  EXPECT_FALSE(j.decisions.back().gate_passed);
  EXPECT_EQ(s.queue_position("j3"), 0u);
}

TEST(Route, UnknownDeviceFailsForLackOfCapacity) {
  Scheduler s(small_config());
  add_peer(s, "sp-x", PeerRole::SuperProvider, "X");
  const Job& j = s.submit("j4", manifest(1, 1), on("Z"));
  EXPECT_EQ(j.state, JobState::Failed);
  EXPECT_EQ(j.failure_reason, "no capacity for device model");
}

TEST(Route, NoSuperProviderAndUnreliableFailsFast) {
  Scheduler s(small_config(0.25, 30));
  add_peer(s, "p-x", PeerRole::Provider, "X");
  const Job& j = s.submit("j5", manifest(1, 1), on("X"));
  EXPECT_EQ(j.state, JobState::Failed);
}

TEST(Route, LeastRecentlyUsedThenLexicographic) {
  Scheduler s(small_config());
  add_peer(s, "sp-b", PeerRole::SuperProvider, "X");
  add_peer(s, "sp-a", PeerRole::SuperProvider, "X");
  EXPECT_EQ(s.submit("j1", manifest(1, 1), on("X")).peer_id, "sp-a");
  EXPECT_EQ(s.submit("j2", manifest(1, 1), on("X")).peer_id, "sp-b");
  s.complete_hardware("j1", "sp-a", 10.0, 5.0);
  s.complete_hardware("j2", "sp-b", 10.0, 5.0);
  // sp-a was used first, so it is the least recently used.
  EXPECT_EQ(s.submit("j3", manifest(1, 1), on("X")).peer_id, "sp-a");
}

TEST(CompleteHardware, FreshModelErrorAndSingleUpdates) {
  Scheduler s(small_config());
  add_peer(s, "sp", PeerRole::SuperProvider, "X");
  s.submit("j", manifest(1, 1), on("X"));
  auto rec = s.complete_hardware("j", "sp", 6.0, 3.0);
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->source, MeasurementSource::Hardware);
  ASSERT_TRUE(rec->epsilon);
  EXPECT_EQ(*rec->epsilon, 2.0);  // (6 - 0) / 3
  const DeviceModels* m = s.models("X");
  EXPECT_EQ(m->energy_updates, 1u);
  EXPECT_EQ(m->reliability_updates, 1u);
  EXPECT_EQ(m->energy.samples(), 1u);
  EXPECT_EQ(m->reliability.samples(), 1u);
  EXPECT_EQ(s.job("j").state, JobState::Completed);
  EXPECT_EQ(s.registry().peers.at("sp").state, PeerState::Idle);
}

TEST(CompleteHardware, ExactEstimateRecordsZeroError) {
  Scheduler s(small_config());
  add_peer(s, "sp", PeerRole::SuperProvider, "X");
  s.submit("j", manifest(1, 1), on("X"));
  auto rec = s.complete_hardware("j", "sp", 0.0, 4.0);  // fresh model estimates 0 J
  ASSERT_TRUE(rec);
  EXPECT_EQ(*rec->epsilon, 0.0);
  EXPECT_EQ(s.models("X")->reliability.weights().norm(), 0.0);
}

TEST(CompleteHardware, DrainsWaitingJobInSameStep) {
  Scheduler s(small_config(0.25, 30));
  add_peer(s, "sp", PeerRole::SuperProvider, "X");
  s.submit("first", manifest(1, 1), on("X"));
  s.submit("second", manifest(1, 1), on("X"));
  ASSERT_EQ(s.job("second").state, JobState::Waiting);
  s.complete_hardware("first", "sp", 5.0, 5.0);
  EXPECT_EQ(s.job("second").state, JobState::Running);
  EXPECT_EQ(s.job("second").peer_id, "sp");
  EXPECT_TRUE(s.registry().wait_queues.at("X").empty());
}

TEST(CompleteHardware, MalformedMeasurementFailsJobAndKeepsModels) {
  Scheduler s(small_config());
  add_peer(s, "sp", PeerRole::SuperProvider, "X");
  s.submit("neg", manifest(1, 1), on("X"));
  EXPECT_FALSE(s.complete_hardware("neg", "sp", -1.0, 5.0));
  s.submit("zero", manifest(1, 1), on("X"));
  EXPECT_FALSE(s.complete_hardware("zero", "sp", 1.0, 0.0));
  EXPECT_EQ(s.job("neg").state, JobState::Failed);
  EXPECT_EQ(s.job("zero").state, JobState::Failed);
  EXPECT_EQ(s.models("X")->energy.samples(), 0u);
  EXPECT_EQ(s.registry().peers.at("sp").state, PeerState::Idle);
}

TEST(CompleteHardware, RejectsNonAssignee) {
  Scheduler s(small_config());
  add_peer(s, "sp1", PeerRole::SuperProvider, "X");
  add_peer(s, "sp2", PeerRole::SuperProvider, "X");
  s.submit("j", manifest(1, 1), on("X"));
  const std::string other = s.job("j").peer_id == "sp1" ? "sp2" : "sp1";
  EXPECT_THROW(s.complete_hardware("j", other, 1.0, 1.0), SchedulerError);
  EXPECT_EQ(s.job("j").state, JobState::Running);
}

TEST(CompleteModel, RecordsEstimateWithoutErrorOrUpdates) {
  Scheduler s(small_config());
  add_peer(s, "sp", PeerRole::SuperProvider, "X");
  add_peer(s, "p", PeerRole::Provider, "X");
  // Constant 1.2 W ground truth.
  for (int i = 0; i < 12; ++i) {
    const std::string id = "t" + std::to_string(i);
    s.submit(id, manifest(1 + i % 4, 1 + i % 3, 1.0 + i % 5), on("X"));
    s.complete_hardware(id, "sp", 1.2 * 7.0, 7.0);
  }
  s.submit("busy", manifest(1, 1), on("X"));
  const Job& j = s.submit("m", manifest(1, 1, 1.0, 10.0), on("X"));
  ASSERT_EQ(j.peer_id, "p");
  const auto updates = s.models("X")->energy_updates;
  MeasurementRecord rec = s.complete_model("m", "p");
  EXPECT_EQ(rec.source, MeasurementSource::Model);
  EXPECT_FALSE(rec.epsilon.has_value());
  EXPECT_EQ(rec.energy_j, estimate_energy(s.models("X")->energy, j.features, 10.0));
  EXPECT_NEAR(rec.energy_j, 12.0, 1e-5);  // 1.2 W over a 10 s suite
  EXPECT_EQ(rec.duration_s, 10.0);
  EXPECT_EQ(s.models("X")->energy_updates, updates);
  EXPECT_EQ(s.registry().peers.at("p").state, PeerState::Idle);
}

TEST(PeerEvent, RegisteringSuperProviderDrainsQueue) {
  Scheduler s(small_config(0.25, 30));
  add_peer(s, "sp1", PeerRole::SuperProvider, "X");
  s.submit("busy", manifest(1, 1), on("X"));
  s.submit("w", manifest(1, 1), on("X"));
  ASSERT_EQ(s.job("w").state, JobState::Waiting);
  add_peer(s, "sp2", PeerRole::SuperProvider, "X");
  EXPECT_EQ(s.job("w").state, JobState::Running);
  EXPECT_EQ(s.job("w").decisions.back().outcome, Outcome::AssignHardware);
}

TEST(PeerEvent, OfflineBusyPeerFailsAndRequeuesAtHead) {
  Scheduler s(small_config(0.25, 30));
  add_peer(s, "sp", PeerRole::SuperProvider, "X");
  s.submit("victim", manifest(1, 1), on("X"));
  s.submit("later", manifest(1, 1), on("X"));
  s.peer_event({PeerEventKind::Offline, "sp", {}, {}});
  EXPECT_EQ(s.job("victim").state, JobState::Failed);
  EXPECT_EQ(s.job("victim").failure_reason, "peer lost");
  ASSERT_TRUE(s.job("victim").resubmitted_as);
  const std::string retry = *s.job("victim").resubmitted_as;
  EXPECT_EQ(s.queue_position(retry), 0u);
  EXPECT_EQ(s.queue_position("later"), 1u);
  // Coming back online serves the retry first.
  s.peer_event({PeerEventKind::Heartbeat, "sp", {}, {}});
  EXPECT_EQ(s.job(retry).state, JobState::Running);
  EXPECT_EQ(s.job("later").state, JobState::Waiting);
}

TEST(PeerEvent, HeartbeatOnIdlePeerChangesNothing) {
  Scheduler s(small_config());
  add_peer(s, "p", PeerRole::Provider, "X");
  s.peer_event({PeerEventKind::Heartbeat, "p", {}, {}});
  EXPECT_EQ(s.registry().peers.at("p").state, PeerState::Idle);
  EXPECT_TRUE(s.take_decisions().empty());
}

TEST(PeerEvent, RejectsDuplicateAndUnknown) {
  Scheduler s(small_config());
  add_peer(s, "p", PeerRole::Provider, "X");
  EXPECT_THROW(add_peer(s, "p", PeerRole::SuperProvider, "X"), SchedulerError);
  EXPECT_THROW(s.peer_event({PeerEventKind::Heartbeat, "ghost", {}, {}}), SchedulerError);
  EXPECT_THROW(s.peer_event({PeerEventKind::Offline, "ghost", {}, {}}), SchedulerError);
}

TEST(MaxWait, ExpiresWaitingJobs) {
  auto cfg = small_config(0.25, 30);
  cfg.max_wait = 5;
  Scheduler s(cfg);
  add_peer(s, "sp", PeerRole::SuperProvider, "X");
  s.submit("busy", manifest(1, 1), on("X"));
  s.submit("w", manifest(1, 1), on("X"));
  s.advance_clock(5);
  EXPECT_EQ(s.job("w").state, JobState::Waiting);
  s.advance_clock(6);
  EXPECT_EQ(s.job("w").state, JobState::Failed);
  EXPECT_EQ(s.job("w").failure_reason, "max wait exceeded");
  EXPECT_THROW(s.advance_clock(3), SchedulerError);
}

TEST(WaitingJob, DowngradesToModelWhenGateOpens) {
  Scheduler s(small_config());
  add_peer(s, "sp", PeerRole::SuperProvider, "X");
  add_peer(s, "p", PeerRole::Provider, "X");
  s.submit("h", manifest(1, 1), on("X"));
  s.submit("w", manifest(1, 2), on("X"));  // gate cold: waits
  ASSERT_EQ(s.job("w").state, JobState::Waiting);
  for (int i = 0; i < 12; ++i) {
    s.complete_hardware(s.registry().peers.at("sp").current_job.value(), "sp", 20.0, 10.0);
    if (s.job("w").state != JobState::Waiting) break;
  }
  // The waiting job left the queue either to hardware or, once reliable, to a provider.
  EXPECT_NE(s.job("w").state, JobState::Waiting);
}

// ------------------------------------------------------------ properties

struct RandomRun {
  std::vector<Decision> decisions;
  std::vector<std::string> violations;
  VectorXd final_weights;
};

RandomRun random_run(std::uint64_t seed, int steps) {
  std::mt19937_64 rng(seed);
  Scheduler s(small_config(0.6, 5));
  testing::SchedulerAuditor audit;
  RandomRun out;
  const std::vector<std::string> devices = {"X", "Y"};
  int next_job = 0, next_peer = 0;
  std::uint64_t clock = 0;
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  auto step = [&] {
    auto ds = s.take_decisions();
    out.decisions.insert(out.decisions.end(), ds.begin(), ds.end());
    audit.observe(s, ds);
  };

  for (int i = 0; i < steps; ++i) {
    const int op = pick(100);
    try {
      if (op < 6) {
        const auto role = pick(3) == 0 ? PeerRole::SuperProvider : PeerRole::Provider;
        add_peer(s, "peer" + std::to_string(next_peer++), role, devices[pick(2)]);
      } else if (op < 40) {
        s.submit("job" + std::to_string(next_job++),
                 manifest(pick(5), pick(5), pick(3), 1.0 + pick(30)), on(devices[pick(2)]));
      } else if (op < 75) {
        std::vector<const PeerRecord*> busy;
        for (const auto& [id, p] : s.registry().peers)
          if (p.state == PeerState::Busy) busy.push_back(&p);
        if (!busy.empty()) {
          const PeerRecord& p = *busy[pick(static_cast<int>(busy.size()))];
          const std::string job = *p.current_job, peer = p.peer_id;
          if (p.role == PeerRole::SuperProvider) {
            const double dt = pick(20) == 0 ? 0.0 : 1.0 + pick(20);
            const double power = 1.0 + 0.1 * pick(10);
            if (s.complete_hardware(job, peer, power * dt, dt))
              audit.hardware_completed(s.job(job).context.device_model);
          } else {
            s.complete_model(job, peer);
          }
        }
      } else if (op < 85) {
        if (next_peer > 0)
          s.peer_event({PeerEventKind::Heartbeat, "peer" + std::to_string(pick(next_peer)), {}, {}});
      } else if (op < 90) {
        if (next_peer > 0)
          s.peer_event({PeerEventKind::Offline, "peer" + std::to_string(pick(next_peer)), {}, {}});
      } else {
        clock += 1 + pick(3);
        s.advance_clock(clock);
      }
    } catch (const SchedulerError&) {
      // Refused requests are part of the random stream.
    }
    step();
  }
  audit.finish(s);
  out.violations = audit.violations;
  if (const auto* m = s.models("X")) out.final_weights = m->energy.weights();
  return out;
}

TEST(SchedulerProperties, RandomEventSequencesKeepInvariants) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RandomRun run = random_run(seed, 1500);
    EXPECT_TRUE(run.violations.empty())
        << "seed " << seed << ": " << run.violations.front();
    EXPECT_GT(run.decisions.size(), 100u);
  }
}

TEST(SchedulerProperties, IdenticalEventsGiveIdenticalDecisions) {
  RandomRun a = random_run(42, 1000);
  RandomRun b = random_run(42, 1000);
  EXPECT_EQ(a.decisions, b.decisions);
  EXPECT_TRUE(a.final_weights == b.final_weights);
}

TEST(SchedulerProperties, AllDeclaredTransitionsAndNoOthers) {
  const std::vector<JobState> all = {JobState::Submitted, JobState::AssignedHardware,
                                     JobState::AssignedModel, JobState::Waiting,
                                     JobState::Running, JobState::Completed,
                                     JobState::Failed};
  int legal = 0;
  for (auto a : all)
    for (auto b : all) legal += is_legal_transition(a, b) ? 1 : 0;
  EXPECT_EQ(legal, 4 + 3 + 1 + 1 + 2);
  EXPECT_FALSE(is_legal_transition(JobState::Failed, JobState::Waiting));
  EXPECT_FALSE(is_legal_transition(JobState::Completed, JobState::Running));
}

}  // namespace
}  // namespace emaas
