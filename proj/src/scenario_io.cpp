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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "emaas/simulator.hpp"

namespace emaas {

namespace {

std::string field(const std::string& path, const std::string& name) {
  return path.empty() ? name : path + "." + name;
}

std::string at(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const Json* find(const Json& doc, const char* name) {
  auto it = doc.find(name);
  return it == doc.end() || it->is_null() ? nullptr : &*it;
}

void expect_object(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw ValidationError(path.empty() ? "$" : path, "expected an object");
}

double number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ValidationError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ValidationError(path, "must be finite");
  return d;
}

std::uint64_t count(const Json& v, const std::string& path) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ValidationError(path, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

void read(const Json& doc, const std::string& path, const char* name, double& out) {
  if (const Json* v = find(doc, name)) out = number(*v, field(path, name));
}

void read(const Json& doc, const std::string& path, const char* name, std::uint64_t& out) {
  if (const Json* v = find(doc, name)) out = count(*v, field(path, name));
}

void read(const Json& doc, const std::string& path, const char* name, int& out) {
  if (const Json* v = find(doc, name)) {
    if (!v->is_number_integer()) throw ValidationError(field(path, name), "expected an integer");
    const auto n = v->get<std::int64_t>();
    if (n < 0 || n > 1'000'000) throw ValidationError(field(path, name), "out of range");
    out = static_cast<int>(n);
  }
}

Range range(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw ValidationError(path, "expected [lo, hi]");
  return {number(v[0], at(path, 0)), number(v[1], at(path, 1))};
}

std::vector<std::string> strings(const Json& v, const std::string& path) {
  if (!v.is_array()) throw ValidationError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) throw ValidationError(at(path, i), "expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

AppGenerator generator_from_json(const Json& doc, AppGenerator g) {
  const std::string p = "generator";
  expect_object(doc, p);
  if (const Json* v = find(doc, "vocabulary")) g.vocab = vocabulary_from_json(*v, field(p, "vocabulary"));
  if (const Json* v = find(doc, "ood_api_set")) g.ood_api_set = strings(*v, field(p, "ood_api_set"));
  read(doc, p, "zipf_s", g.zipf_s);
  read(doc, p, "ood_fraction", g.ood_fraction);
  if (const Json* v = find(doc, "calls_range")) {
    const std::string cp = field(p, "calls_range");
    if (!v->is_array() || v->size() != 2) throw ValidationError(cp, "expected [min, max]");
    g.calls_min = static_cast<std::int64_t>(count((*v)[0], at(cp, 0)));
    g.calls_max = static_cast<std::int64_t>(count((*v)[1], at(cp, 1)));
  }
  if (const Json* v = find(doc, "duration_range_s")) g.duration_s = range(*v, field(p, "duration_range_s"));
  if (const Json* v = find(doc, "complexity")) {
    const std::string cp = field(p, "complexity");
    if (!v->is_array()) throw ValidationError(cp, "expected an array");
    g.complexity_names.clear();
    g.complexity_ranges.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const Json& e = (*v)[i];
      const std::string ep = at(cp, i);
      expect_object(e, ep);
      const Json* name = find(e, "name");
      if (!name || !name->is_string()) throw ValidationError(field(ep, "name"), "expected a string");
      const Json* r = find(e, "range");
      if (!r) throw ValidationError(field(ep, "range"), "is required");
      g.complexity_names.push_back(name->get<std::string>());
      g.complexity_ranges.push_back(range(*r, field(ep, "range")));
    }
  }
  return g;
}

DeviceSpec device_from_json(const Json& doc, const std::string& path) {
  expect_object(doc, path);
  DeviceSpec d;
  const Json* name = find(doc, "device_model");
  if (!name) throw ValidationError(field(path, "device_model"), "is required");
  if (!name->is_string()) throw ValidationError(field(path, "device_model"), "expected a string");
  d.device_model = name->get<std::string>();
  read(doc, path, "providers", d.providers);
  read(doc, path, "super_providers", d.super_providers);
  if (const Json* gt = find(doc, "ground_truth")) {
    const std::string gp = field(path, "ground_truth");
    expect_object(*gt, gp);
    read(*gt, gp, "ood_penalty_w", d.ground_truth.ood_penalty_w);
    read(*gt, gp, "ood_spread", d.ground_truth.ood_spread);
    read(*gt, gp, "noise_sigma_w", d.ground_truth.noise_sigma_w);
    if (const Json* w = find(*gt, "w_star")) {
      try {
        d.ground_truth.w_star = vector_from_json(*w);
      } catch (const ValidationError&) {
        throw ValidationError(field(gp, "w_star"), "expected an array of numbers");
      }
    }
  }
  return d;
}

Json range_json(const Range& r) { return Json::array({r.lo, r.hi}); }

}  // namespace

ScenarioConfig default_scenario() {
  ScenarioConfig c;
  std::vector<std::string> vocab;
  for (int i = 0; i < 32; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "api.%03d", i);
    vocab.emplace_back(buf);
  }
  c.generator.vocab = ApiVocabulary(vocab);
  c.generator.ood_api_set = {"ood.api.0", "ood.api.1", "ood.api.2", "ood.api.3"};
  c.generator.complexity_names = {"method_count", "cyclomatic_mean"};
  c.generator.complexity_ranges = {{50.0, 500.0}, {1.0, 8.0}};
  c.devices = {DeviceSpec{"nexus-5x", 3, 1, {}}, DeviceSpec{"pixel-3", 3, 1, {}}};
  return c;
}

ScenarioConfig in_distribution_scenario() {
  ScenarioConfig c = default_scenario();
  c.duration_events = 2000;
  c.generator.ood_fraction = 0.0;
  return c;
}

void validate(const ScenarioConfig& c) {
  if (c.duration_events == 0) throw ValidationError("duration_events", "must be positive");
  if (!(c.tick_seconds > 0.0) || !std::isfinite(c.tick_seconds))
    throw ValidationError("tick_seconds", "must be positive");
  if (!(c.arrival_rate >= 0.0) || !std::isfinite(c.arrival_rate))
    throw ValidationError("arrival_rate", "must be non-negative");
  if (c.windows == 0) throw ValidationError("windows", "must be positive");
  if (c.windows > c.duration_events)
    throw ValidationError("windows", "must not exceed duration_events");
  if (!(c.gate.theta_w >= 0.0)) throw ValidationError("gate.theta_w", "must be non-negative");
  if (!(c.gate.forgetting > 0.0 && c.gate.forgetting <= 1.0))
    throw ValidationError("gate.lambda", "must lie in (0, 1]");
  if (!(c.gate.initial_covariance > 0.0))
    throw ValidationError("gate.initial_covariance", "must be positive");
  if (!(c.busy_cycle.mean_available_ticks >= 1.0))
    throw ValidationError("busy_cycle.mean_available_ticks", "must be at least 1");
  if (!(c.busy_cycle.mean_unavailable_ticks >= 0.0))
    throw ValidationError("busy_cycle.mean_unavailable_ticks", "must be non-negative");

  const AppGenerator& g = c.generator;
  if (g.vocab.size() == 0) throw ValidationError("generator.vocabulary", "must not be empty");
  if (g.ood_api_set.empty()) throw ValidationError("generator.ood_api_set", "must not be empty");
  std::size_t in_dist = 0;
  for (const auto& api : g.vocab.entries())
    if (std::find(g.ood_api_set.begin(), g.ood_api_set.end(), api) == g.ood_api_set.end())
      ++in_dist;
  if (in_dist == 0)
    throw ValidationError("generator.ood_api_set", "leaves no in-distribution apis");
  if (!(g.zipf_s >= 0.0) || !std::isfinite(g.zipf_s))
    throw ValidationError("generator.zipf_s", "must be non-negative");
  if (!(g.ood_fraction >= 0.0 && g.ood_fraction <= 1.0))
    throw ValidationError("generator.ood_fraction", "must lie in [0, 1]");
  if (g.calls_min < 1 || g.calls_max < g.calls_min)
    throw ValidationError("generator.calls_range", "expected 1 <= min <= max");
  if (!(g.duration_s.lo > 0.0) || !(g.duration_s.hi >= g.duration_s.lo))
    throw ValidationError("generator.duration_range_s", "expected 0 < lo <= hi");
  if (g.complexity_names.size() != g.complexity_ranges.size())
    throw ValidationError("generator.complexity", "names and ranges differ in length");
  std::set<std::string> cx;
  for (std::size_t i = 0; i < g.complexity_names.size(); ++i) {
    const std::string p = "generator.complexity[" + std::to_string(i) + "]";
    if (g.complexity_names[i].empty() || !cx.insert(g.complexity_names[i]).second)
      throw ValidationError(p + ".name", "must be non-empty and unique");
    if (!(g.complexity_ranges[i].hi >= g.complexity_ranges[i].lo))
      throw ValidationError(p + ".range", "expected lo <= hi");
  }

  if (c.devices.empty()) throw ValidationError("devices", "must not be empty");
  std::set<std::string> names;
  const auto dim = static_cast<Eigen::Index>(g.vocab.size() + g.complexity_names.size() + 2);
  for (std::size_t i = 0; i < c.devices.size(); ++i) {
    const DeviceSpec& d = c.devices[i];
    const std::string p = "devices[" + std::to_string(i) + "]";
    if (d.device_model.empty() || !names.insert(d.device_model).second)
      throw ValidationError(p + ".device_model", "must be non-empty and unique");
    if (d.providers < 0) throw ValidationError(p + ".providers", "must be non-negative");
    if (d.super_providers < 0)
      throw ValidationError(p + ".super_providers", "must be non-negative");
    const auto& gt = d.ground_truth;
    if (!(gt.noise_sigma_w >= 0.0))
      throw ValidationError(p + ".ground_truth.noise_sigma_w", "must be non-negative");
    if (!(gt.ood_spread >= 0.0 && gt.ood_spread <= 1.0))
      throw ValidationError(p + ".ground_truth.ood_spread", "must lie in [0, 1]");
    if (gt.w_star && gt.w_star->size() != dim)
      throw ValidationError(p + ".ground_truth.w_star",
                            "expected " + std::to_string(dim) + " weights");
  }
}

Json to_json(const ScenarioConfig& c) {
  Json cx = Json::array();
  for (std::size_t i = 0; i < c.generator.complexity_names.size(); ++i)
    cx.push_back({{"name", c.generator.complexity_names[i]},
                  {"range", range_json(c.generator.complexity_ranges[i])}});
  Json devices = Json::array();
  for (const auto& d : c.devices) {
    Json gt = {{"ood_penalty_w", d.ground_truth.ood_penalty_w},
               {"ood_spread", d.ground_truth.ood_spread},
               {"noise_sigma_w", d.ground_truth.noise_sigma_w}};
    if (d.ground_truth.w_star) gt["w_star"] = to_json(*d.ground_truth.w_star);
    devices.push_back({{"device_model", d.device_model},
                       {"providers", d.providers},
                       {"super_providers", d.super_providers},
                       {"ground_truth", gt}});
  }
  return {{"schema_version", kSchemaVersion},
          {"seed", c.seed},
          {"duration_events", c.duration_events},
          {"tick_seconds", c.tick_seconds},
          {"arrival_rate", c.arrival_rate},
          {"max_wait", c.max_wait ? Json(*c.max_wait) : Json(nullptr)},
          {"windows", c.windows},
          {"rq1_min_hardware_samples", c.rq1_min_hardware_samples},
          {"snapshot_every", c.snapshot_every},
          {"gate", to_json(c.gate)},
          {"busy_cycle",
           {{"mean_available_ticks", c.busy_cycle.mean_available_ticks},
            {"mean_unavailable_ticks", c.busy_cycle.mean_unavailable_ticks}}},
          {"generator",
           {{"vocabulary", to_json(c.generator.vocab)},
            {"ood_api_set", c.generator.ood_api_set},
            {"zipf_s", c.generator.zipf_s},
            {"calls_range", Json::array({c.generator.calls_min, c.generator.calls_max})},
            {"complexity", cx},
            {"ood_fraction", c.generator.ood_fraction},
            {"duration_range_s", range_json(c.generator.duration_s)}}},
          {"devices", devices}};
}

ScenarioConfig scenario_from_json(const Json& doc) {
  expect_object(doc, "");
  ScenarioConfig c = default_scenario();
  if (const Json* v = find(doc, "schema_version")) {
    if (!v->is_number_integer() || v->get<std::int64_t>() != kSchemaVersion)
      throw ValidationError("schema_version", "unsupported version");
  }
  read(doc, "", "seed", c.seed);
  read(doc, "", "duration_events", c.duration_events);
  read(doc, "", "tick_seconds", c.tick_seconds);
  read(doc, "", "arrival_rate", c.arrival_rate);
  if (auto it = doc.find("max_wait"); it != doc.end())
    c.max_wait = it->is_null() ? std::nullopt : std::optional(count(*it, "max_wait"));
  read(doc, "", "windows", c.windows);
  read(doc, "", "rq1_min_hardware_samples", c.rq1_min_hardware_samples);
  read(doc, "", "snapshot_every", c.snapshot_every);
  if (const Json* v = find(doc, "gate")) {
    expect_object(*v, "gate");
    c.gate = gate_from_json(*v, c.gate);
  }
  if (const Json* v = find(doc, "busy_cycle")) {
    expect_object(*v, "busy_cycle");
    read(*v, "busy_cycle", "mean_available_ticks", c.busy_cycle.mean_available_ticks);
    read(*v, "busy_cycle", "mean_unavailable_ticks", c.busy_cycle.mean_unavailable_ticks);
  }
  if (const Json* v = find(doc, "generator")) c.generator = generator_from_json(*v, c.generator);
  if (const Json* v = find(doc, "devices")) {
    if (!v->is_array()) throw ValidationError("devices", "expected an array");
    c.devices.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      c.devices.push_back(device_from_json((*v)[i], at("devices", i)));
  }
  validate(c);
  return c;
}

}  // namespace emaas
