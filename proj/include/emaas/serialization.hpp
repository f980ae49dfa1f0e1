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

#include <json.hpp>

#include <string>

#include "emaas/energy_model.hpp"
#include "emaas/scheduler.hpp"
#include "emaas/types.hpp"

namespace emaas {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// A document failed schema validation. `path()` names the offending field,
/// e.g. "tests[0].nominal_duration_s".
class ValidationError : public ContractViolation {
 public:
  ValidationError(std::string path, const std::string& message)
      : ContractViolation(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

Json to_json(const AppManifest& manifest);
AppManifest manifest_from_json(const Json& doc, const std::string& path = "");

Json to_json(const ExecutionContext& context);
ExecutionContext context_from_json(const Json& doc, const std::string& path = "");

Json to_json(const ApiVocabulary& vocab);
ApiVocabulary vocabulary_from_json(const Json& doc, const std::string& path = "");

Json to_json(const MeasurementRecord& record);
MeasurementRecord record_from_json(const Json& doc);

Json to_json(const Decision& decision);
Decision decision_from_json(const Json& doc);

Json to_json(const PeerEvent& event);
PeerEvent peer_event_from_json(const Json& doc);

Json to_json(const GateConfig& gate);
GateConfig gate_from_json(const Json& doc, const GateConfig& defaults = {});

Json to_json(const SchedulerConfig& config);
SchedulerConfig scheduler_config_from_json(const Json& doc);

/// Weights and sample counts per device (covariances are omitted).
Json models_to_json(const Registry& registry);

/// Largest absolute weight difference between two models_to_json documents;
/// +inf when their device sets or dimensions differ.
double max_weight_difference(const Json& a, const Json& b);

VectorXd vector_from_json(const Json& doc);
Json to_json(const VectorXd& v);

}  // namespace emaas
