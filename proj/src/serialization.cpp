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

#include "emaas/serialization.hpp"

#include <cmath>
#include <limits>

namespace emaas {

namespace {

std::string join(const std::string& path, const std::string& field) {
  return path.empty() ? field : path + "." + field;
}

std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const Json& require(const Json& doc, const std::string& path, const char* field) {
  if (!doc.is_object()) throw ValidationError(path.empty() ? "$" : path, "expected an object");
  auto it = doc.find(field);
  if (it == doc.end()) throw ValidationError(join(path, field), "is required");
  return *it;
}

std::string require_string(const Json& doc, const std::string& path, const char* field,
                           bool non_empty = true) {
  const Json& v = require(doc, path, field);
  if (!v.is_string()) throw ValidationError(join(path, field), "expected a string");
  std::string s = v.get<std::string>();
  if (non_empty && s.empty()) throw ValidationError(join(path, field), "must not be empty");
  return s;
}

double require_number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ValidationError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ValidationError(path, "must be finite");
  return d;
}

std::string optional_string(const Json& doc, const char* field) {
  auto it = doc.find(field);
  if (it == doc.end() || it->is_null()) return {};
  return it->get<std::string>();
}

}  // namespace

Json to_json(const VectorXd& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

VectorXd vector_from_json(const Json& doc) {
  if (!doc.is_array()) throw ValidationError("$", "expected an array of numbers");
  VectorXd v(static_cast<Eigen::Index>(doc.size()));
  for (std::size_t i = 0; i < doc.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = require_number(doc[i], index("$", i));
  return v;
}

Json to_json(const AppManifest& m) {
  Json tests = Json::array();
  for (const auto& t : m.tests)
    tests.push_back({{"test_id", t.test_id}, {"nominal_duration_s", t.nominal_duration_s}});
  return Json{{"schema_version", kSchemaVersion},
              {"app_id", m.app_id},
              {"api_calls", m.api_calls},
              {"complexity", m.complexity},
              {"tests", tests}};
}

AppManifest manifest_from_json(const Json& doc, const std::string& path) {
  AppManifest m;
  if (!doc.is_object()) throw ValidationError(path.empty() ? "$" : path, "expected an object");
  if (auto it = doc.find("schema_version");
      it != doc.end() && !(it->is_number_integer() && it->get<std::int64_t>() == kSchemaVersion))
    throw ValidationError(join(path, "schema_version"), "unsupported version");
  m.app_id = require_string(doc, path, "app_id");

  if (auto it = doc.find("api_calls"); it != doc.end()) {
    const std::string p = join(path, "api_calls");
    if (!it->is_object()) throw ValidationError(p, "expected an object");
    for (const auto& [api, count] : it->items()) {
      const std::string cp = p + "." + api;
      if (!count.is_number_integer()) throw ValidationError(cp, "expected an integer count");
      const auto n = count.get<std::int64_t>();
      if (n < 0) throw ValidationError(cp, "count must be non-negative");
      m.api_calls[api] = n;
    }
  }
  if (auto it = doc.find("complexity"); it != doc.end()) {
    const std::string p = join(path, "complexity");
    if (!it->is_object()) throw ValidationError(p, "expected an object");
    for (const auto& [name, value] : it->items())
      m.complexity[name] = require_number(value, p + "." + name);
  }

  const Json& tests = require(doc, path, "tests");
  const std::string tp = join(path, "tests");
  if (!tests.is_array()) throw ValidationError(tp, "expected an array");
  if (tests.empty()) throw ValidationError(tp, "at least one test is required");
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const std::string ip = index(tp, i);
    TestCase t;
    t.test_id = require_string(tests[i], ip, "test_id");
    t.nominal_duration_s =
        require_number(require(tests[i], ip, "nominal_duration_s"), join(ip, "nominal_duration_s"));
    if (!(t.nominal_duration_s > 0.0))
      throw ValidationError(join(ip, "nominal_duration_s"), "must be positive");
    m.tests.push_back(std::move(t));
  }
  return m;
}

Json to_json(const ExecutionContext& c) {
  return Json{{"device_model", c.device_model},
              {"os_version", c.os_version},
              {"api_level", c.api_level},
              {"framework", c.framework}};
}

ExecutionContext context_from_json(const Json& doc, const std::string& path) {
  ExecutionContext c;
  c.device_model = require_string(doc, path, "device_model");
  if (auto it = doc.find("os_version"); it != doc.end()) {
    if (!it->is_string()) throw ValidationError(join(path, "os_version"), "expected a string");
    c.os_version = it->get<std::string>();
  }
  if (auto it = doc.find("api_level"); it != doc.end()) {
    if (!it->is_number_integer())
      throw ValidationError(join(path, "api_level"), "expected an integer");
    c.api_level = it->get<int>();
  }
  if (auto it = doc.find("framework"); it != doc.end()) {
    if (!it->is_string()) throw ValidationError(join(path, "framework"), "expected a string");
    c.framework = it->get<std::string>();
  }
  return c;
}

Json to_json(const ApiVocabulary& vocab) { return Json(vocab.entries()); }

ApiVocabulary vocabulary_from_json(const Json& doc, const std::string& path) {
  const std::string p = path.empty() ? "$" : path;
  if (!doc.is_array()) throw ValidationError(p, "expected an array of API identifiers");
  std::vector<std::string> entries;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_string()) throw ValidationError(index(p, i), "expected a string");
    entries.push_back(doc[i].get<std::string>());
  }
  try {
    return ApiVocabulary(std::move(entries));
  } catch (const ContractViolation& e) {
    throw ValidationError(p, e.what());
  }
}

Json to_json(const MeasurementRecord& r) {
  Json j{{"schema_version", kSchemaVersion},
         {"job_id", r.job_id},
         {"energy_j", r.energy_j},
         {"duration_s", r.duration_s},
         {"source", std::string(to_string(r.source))},
         {"timestamp", r.timestamp}};
  if (r.epsilon) j["epsilon_w"] = *r.epsilon;
  return j;
}

MeasurementRecord record_from_json(const Json& doc) {
  MeasurementRecord r;
  r.job_id = doc.at("job_id").get<std::string>();
  r.energy_j = doc.at("energy_j").get<double>();
  r.duration_s = doc.at("duration_s").get<double>();
  const auto source = doc.at("source").get<std::string>();
  if (source == "hardware") r.source = MeasurementSource::Hardware;
  else if (source == "model") r.source = MeasurementSource::Model;
  else throw ValidationError("source", "unknown measurement source '" + source + "'");
  if (auto it = doc.find("epsilon_w"); it != doc.end()) r.epsilon = it->get<double>();
  r.timestamp = doc.value("timestamp", std::uint64_t{0});
  return r;
}

Json to_json(const Decision& d) {
  Json j{{"job_id", d.job_id},
         {"outcome", std::string(to_string(d.outcome))},
         {"predicted_abs_error_w", d.predicted_abs_error_w},
         {"gate_passed", d.gate_passed},
         {"hardware_samples", d.hardware_samples},
         {"theta_w", d.theta_w},
         {"at", d.at}};
  j["peer_id"] = d.peer_id ? Json(*d.peer_id) : Json(nullptr);
  if (!d.reason.empty()) j["reason"] = d.reason;
  return j;
}

Decision decision_from_json(const Json& doc) {
  Decision d;
  d.job_id = doc.at("job_id").get<std::string>();
  d.outcome = parse_outcome(doc.at("outcome").get<std::string>());
  if (auto it = doc.find("peer_id"); it != doc.end() && !it->is_null())
    d.peer_id = it->get<std::string>();
  d.predicted_abs_error_w = doc.at("predicted_abs_error_w").get<double>();
  d.gate_passed = doc.at("gate_passed").get<bool>();
  d.hardware_samples = doc.at("hardware_samples").get<std::uint64_t>();
  d.theta_w = doc.at("theta_w").get<double>();
  d.at = doc.at("at").get<std::uint64_t>();
  d.reason = optional_string(doc, "reason");
  return d;
}

Json to_json(const PeerEvent& e) {
  Json j{{"event", std::string(to_string(e.kind))}, {"peer_id", e.peer_id}};
  if (e.kind == PeerEventKind::Register) {
    j["role"] = std::string(to_string(e.role));
    j["device_model"] = e.device_model;
  }
  return j;
}

PeerEvent peer_event_from_json(const Json& doc) {
  PeerEvent e;
  e.kind = parse_peer_event_kind(doc.at("event").get<std::string>());
  e.peer_id = doc.at("peer_id").get<std::string>();
  if (e.kind == PeerEventKind::Register) {
    e.role = parse_peer_role(doc.at("role").get<std::string>());
    e.device_model = doc.at("device_model").get<std::string>();
  }
  return e;
}

Json to_json(const GateConfig& g) {
  return Json{{"theta_w", g.theta_w},
              {"n_min", g.n_min},
              {"lambda", g.forgetting},
              {"initial_covariance", g.initial_covariance}};
}

GateConfig gate_from_json(const Json& doc, const GateConfig& defaults) {
  GateConfig g = defaults;
  if (doc.is_null()) return g;
  if (!doc.is_object()) throw ValidationError("gate", "expected an object");
  if (doc.contains("theta_w")) g.theta_w = require_number(doc["theta_w"], "gate.theta_w");
  if (doc.contains("n_min")) {
    if (!doc["n_min"].is_number_integer() || doc["n_min"].get<std::int64_t>() < 0)
      throw ValidationError("gate.n_min", "expected a non-negative integer");
    g.n_min = doc["n_min"].get<std::uint64_t>();
  }
  if (doc.contains("lambda")) g.forgetting = require_number(doc["lambda"], "gate.lambda");
  if (doc.contains("initial_covariance"))
    g.initial_covariance =
        require_number(doc["initial_covariance"], "gate.initial_covariance");
  if (!(g.theta_w > 0.0)) throw ValidationError("gate.theta_w", "must be positive");
  if (g.n_min < 1) throw ValidationError("gate.n_min", "must be at least 1");
  if (!(g.forgetting > 0.0 && g.forgetting <= 1.0))
    throw ValidationError("gate.lambda", "must lie in (0, 1]");
  if (!(g.initial_covariance > 0.0))
    throw ValidationError("gate.initial_covariance", "must be positive");
  return g;
}

Json to_json(const SchedulerConfig& c) {
  Json j{{"vocabulary", to_json(c.vocab)},
         {"complexity_names", c.complexity_names},
         {"gate", to_json(c.gate)}};
  j["max_wait"] = c.max_wait ? Json(*c.max_wait) : Json(nullptr);
  return j;
}

SchedulerConfig scheduler_config_from_json(const Json& doc) {
  SchedulerConfig c;
  c.vocab = vocabulary_from_json(require(doc, "", "vocabulary"), "vocabulary");
  const Json& names = require(doc, "", "complexity_names");
  if (!names.is_array()) throw ValidationError("complexity_names", "expected an array");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!names[i].is_string())
      throw ValidationError(index("complexity_names", i), "expected a string");
    c.complexity_names.push_back(names[i].get<std::string>());
  }
  c.gate = gate_from_json(doc.value("gate", Json(nullptr)));
  if (auto it = doc.find("max_wait"); it != doc.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
      throw ValidationError("max_wait", "expected a non-negative integer");
    c.max_wait = it->get<std::uint64_t>();
  }
  return c;
}

Json models_to_json(const Registry& registry) {
  Json out = Json::object();
  for (const auto& [device, m] : registry.models) {
    out[device] = Json{
        {"energy", {{"weights", to_json(m.energy.weights())}, {"samples", m.energy.samples()}}},
        {"reliability",
         {{"weights", to_json(m.reliability.weights())},
          {"samples", m.reliability.samples()},
          {"theta_w", m.reliability.theta_w},
          {"n_min", m.reliability.n_min}}}};
  }
  return out;
}

double max_weight_difference(const Json& a, const Json& b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (!a.is_object() || !b.is_object() || a.size() != b.size()) return kInf;
  double worst = 0.0;
  for (const auto& [device, ma] : a.items()) {
    if (!b.contains(device)) return kInf;
    const Json& mb = b.at(device);
    for (const char* part : {"energy", "reliability"}) {
      const VectorXd wa = vector_from_json(ma.at(part).at("weights"));
      const VectorXd wb = vector_from_json(mb.at(part).at("weights"));
      if (wa.size() != wb.size()) return kInf;
      if (ma.at(part).at("samples") != mb.at(part).at("samples")) return kInf;
      if (wa.size() > 0) worst = std::max(worst, (wa - wb).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace emaas
