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

// Independent checker for scheduler safety properties. It watches the
// decision stream and the registry after every operation; it does not reuse
// any routing code.

#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "emaas/scheduler.hpp"

namespace emaas::testing {

class SchedulerAuditor {
 public:
  std::vector<std::string> violations;
  std::size_t decisions_seen = 0;
  std::size_t hardware_results = 0;

  /// Call after every scheduler mutation with the decisions it produced.
  void observe(const Scheduler& s, const std::vector<Decision>& decisions) {
    for (const auto& d : decisions) check_decision(s, d);
    check_registry(s);
  }

  /// Call after every successful hardware completion.
  void hardware_completed(const std::string& device) {
    ++hardware_results;
    ++expected_updates_[device];
  }

  /// End-of-run checks over the whole job table.
  void finish(const Scheduler& s) {
    for (const auto& id : s.job_order()) {
      const Job& job = s.job(id);
      for (std::size_t i = 1; i < job.history.size(); ++i) {
        if (!is_legal_transition(job.history[i - 1], job.history[i]))
          fail("illegal transition for " + id + ": " +
               std::string(to_string(job.history[i - 1])) + " -> " +
               std::string(to_string(job.history[i])));
      }
    }
    check_updates(s);
  }

 private:
  void fail(std::string message) { violations.push_back(std::move(message)); }

  void check_decision(const Scheduler& s, const Decision& d) {
    ++decisions_seen;
    const Job& job = s.job(d.job_id);
    const std::string& device = job.context.device_model;
    auto& shadow = shadow_queues_[device];
    const bool was_waiting =
        std::find(shadow.begin(), shadow.end(), d.job_id) != shadow.end();

    if (d.outcome == Outcome::AssignHardware || d.outcome == Outcome::AssignModel) {
      if (!d.peer_id) {
        fail("assignment without peer for " + d.job_id);
        return;
      }
      const PeerRecord& peer = s.registry().peers.at(*d.peer_id);
      if (peer.device_model != device)
        fail("device mismatch: job " + d.job_id + " (" + device + ") -> peer " +
             peer.peer_id + " (" + peer.device_model + ")");
      const PeerRole expected = d.outcome == Outcome::AssignHardware
                                    ? PeerRole::SuperProvider
                                    : PeerRole::Provider;
      if (peer.role != expected) fail("role mismatch for " + d.job_id);
      if (d.outcome == Outcome::AssignModel &&
          (!d.gate_passed || d.predicted_abs_error_w > d.theta_w))
        fail("AssignModel without passing gate for " + d.job_id);
      if (was_waiting) {
        if (shadow.front() != d.job_id)
          fail("FIFO violated on " + device + ": assigned " + d.job_id +
               " ahead of " + shadow.front());
        shadow.erase(std::find(shadow.begin(), shadow.end(), d.job_id));
      }
    } else if (d.outcome == Outcome::Wait) {
      if (d.reason == "requeued after peer lost") {
        shadow.push_front(d.job_id);
      } else {
        shadow.push_back(d.job_id);
      }
    } else if (was_waiting) {
      shadow.erase(std::find(shadow.begin(), shadow.end(), d.job_id));
    }
  }

  void check_registry(const Scheduler& s) {
    for (const auto& [id, peer] : s.registry().peers) {
      if ((peer.state == PeerState::Busy) != peer.current_job.has_value())
        fail("peer " + id + " busy flag disagrees with current job");
    }
    for (const auto& [device, queue] : s.registry().wait_queues) {
      if (queue.empty()) continue;
      for (const auto& id : queue)
        if (s.job(id).state != JobState::Waiting)
          fail("queued job " + id + " is not waiting");
      for (const auto& [pid, peer] : s.registry().peers) {
        if (peer.device_model == device && peer.role == PeerRole::SuperProvider &&
            peer.state == PeerState::Idle)
          fail("jobs wait on " + device + " while super-provider " + pid + " is idle");
      }
      const std::deque<std::string>& shadow = shadow_queues_[device];
      if (std::vector<std::string>(queue.begin(), queue.end()) !=
          std::vector<std::string>(shadow.begin(), shadow.end()))
        fail("queue order on " + device + " diverges from submission order");
    }
    check_updates(s);
  }

  void check_updates(const Scheduler& s) {
    for (const auto& [device, models] : s.registry().models) {
      const std::size_t expected = expected_updates_[device];
      if (models.energy_updates != expected || models.reliability_updates != expected ||
          models.energy.samples() != expected || models.reliability.samples() != expected)
        fail("update count mismatch on " + device + ": expected " +
             std::to_string(expected) + ", energy " +
             std::to_string(models.energy_updates) + ", reliability " +
             std::to_string(models.reliability_updates));
    }
  }

  std::map<std::string, std::deque<std::string>> shadow_queues_;
  std::map<std::string, std::size_t> expected_updates_;
};

}  // namespace emaas::testing
