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
#include <optional>
#include <string>
#include <vector>

#include "emaas/energy_model.hpp"
#include "emaas/event_log.hpp"
#include "emaas/rng.hpp"
#include "emaas/scheduler.hpp"
#include "emaas/serialization.hpp"

namespace emaas {

// ------------------------------------------------------------ ground truth

/// Hidden power behaviour of one simulated device model, standing in for a
/// hardware power monitor.
///
/// Mean power is w_star . [1, x] plus an out-of-distribution term on the
/// feature mass that falls on `ood_api_indices` and the OOV bucket. Each
/// measurement draws the OOD term's scale from {1 - spread, 1 + spread}, so
/// its mean is `ood_penalty_w` per unit mass but a linear model cannot
/// predict an individual OOD app's power better than +-spread * penalty.
struct GroundTruthPowerModel {
  std::string device_model;
  VectorXd w_star;
  FeatureLayout layout;
  std::vector<std::size_t> ood_api_indices;
  double ood_penalty_w = 1.0;
  double ood_spread = 1.0;
  double noise_sigma_w = 0.05;
};

GroundTruthPowerModel make_ground_truth(std::string device_model, VectorXd w_star,
                                        const ApiVocabulary& vocab,
                                        std::size_t complexity_count,
                                        const std::vector<std::string>& ood_api_set,
                                        double ood_penalty_w, double ood_spread,
                                        double noise_sigma_w);

/// Feature mass on the OOD APIs plus the OOV bucket, read from the same
/// vector the learner sees.
double ood_mass(const GroundTruthPowerModel& gt, const FeatureVector& x);

/// Noise-free mean power of one execution. Consumes `rng` only when the OOD
/// term is active and randomised.
double true_mean_power(const GroundTruthPowerModel& gt, const FeatureVector& x, Rng& rng);

/// One hardware measurement: max(0, true power + N(0, sigma)) * duration.
double simulate_hardware(const GroundTruthPowerModel& gt, const FeatureVector& x,
                         double duration_s, Rng& rng);

/// Same, with the true power drawn beforehand (paired comparisons reuse it).
double measure_hardware(const GroundTruthPowerModel& gt, double true_power_w,
                        double duration_s, Rng& noise);

// -------------------------------------------------------------- workload

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct AppGenerator {
  ApiVocabulary vocab;
  std::vector<std::string> ood_api_set;
  double zipf_s = 1.1;
  std::int64_t calls_min = 20;
  std::int64_t calls_max = 400;
  std::vector<std::string> complexity_names;
  std::vector<Range> complexity_ranges;
  double ood_fraction = 0.2;
  Range duration_s{5.0, 60.0};
};

/// Zipf-skewed call counts over the in-distribution APIs (vocabulary minus
/// the OOD set) or, with probability ood_fraction, over the OOD set; uniform
/// complexity metrics; one test of uniform duration.
AppManifest generate_app(const AppGenerator& gen, Rng& rng, std::string app_id = "app");

// -------------------------------------------------------------- scenario

struct GroundTruthSpec {
  std::optional<VectorXd> w_star;  // drawn per seed when absent
  double ood_penalty_w = 1.0;
  double ood_spread = 1.0;
  double noise_sigma_w = 0.05;
};

struct DeviceSpec {
  std::string device_model;
  int providers = 3;
  int super_providers = 1;
  GroundTruthSpec ground_truth;
};

/// Super-provider owners reclaim their device for exponentially distributed
/// stretches (rounded up to whole ticks). Zero unavailable time disables it.
struct BusyCycle {
  double mean_available_ticks = 300.0;
  double mean_unavailable_ticks = 60.0;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::uint64_t duration_events = 8000;  // ticks
  double tick_seconds = 10.0;
  double arrival_rate = 0.5;  // jobs per tick over all devices
  std::optional<std::uint64_t> max_wait = 300;
  std::uint64_t windows = 20;
  std::uint64_t rq1_min_hardware_samples = 300;
  std::uint64_t snapshot_every = 250;  // hardware results between snapshots
  GateConfig gate;
  AppGenerator generator;
  std::vector<DeviceSpec> devices;
  BusyCycle busy_cycle;

  SchedulerConfig scheduler_config() const;
};

ScenarioConfig default_scenario();
/// Default scenario without OOD apps, shortened so warm-up is a visible share.
ScenarioConfig in_distribution_scenario();
/// Throws ValidationError naming the first bad field.
void validate(const ScenarioConfig& config);
Json to_json(const ScenarioConfig& config);
ScenarioConfig scenario_from_json(const Json& doc);

// ---------------------------------------------------------------- report

struct WindowStats {
  std::uint64_t start = 0;
  std::uint64_t end = 0;  // exclusive
  std::uint64_t hardware = 0;
  std::uint64_t model = 0;
  double hybrid_abs_error_sum = 0.0;
  double software_abs_error_sum = 0.0;

  std::optional<double> hardware_fraction() const;
  std::optional<double> hybrid_mae() const;
  std::optional<double> software_only_mae() const;
};

/// Rows: oracle label (OOD app => should use hardware). Columns: hardware or
/// model.
struct Confusion {
  std::uint64_t ood_hardware = 0;
  std::uint64_t ood_model = 0;
  std::uint64_t in_hardware = 0;
  std::uint64_t in_model = 0;

  std::optional<double> ood_hardware_rate() const;
  std::optional<double> in_distribution_hardware_rate() const;
};

struct DeviceReport {
  std::string device_model;
  std::uint64_t submitted = 0;
  std::uint64_t hardware = 0;
  std::uint64_t model = 0;
  std::uint64_t failed = 0;
  std::optional<double> hardware_fraction() const;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  std::uint64_t duration_events = 0;
  std::vector<WindowStats> windows;
  WindowStats first_quarter;
  WindowStats final_quarter;
  WindowStats overall;
  Confusion gate_confusion;    // RQ1: gate verdict at first routing
  Confusion routed_confusion;  // where those jobs were actually measured
  std::vector<DeviceReport> devices;
  std::uint64_t submitted = 0;
  std::uint64_t failed = 0;
  std::uint64_t waiting_at_end = 0;
  std::uint64_t running_at_end = 0;
  Json final_models;
  std::vector<PersistedEvent> events;
};

/// Report body without the event log (written separately as JSON lines).
Json to_json(const ExperimentReport& report);

/// Hooks for tests that audit the live run.
class ScenarioObserver {
 public:
  virtual ~ScenarioObserver() = default;
  virtual void on_step(const Scheduler&, const std::vector<Decision>&) {}
  virtual void on_hardware_completed(const std::string& /*device_model*/) {}
  virtual void on_finish(const Scheduler&) {}
};

/// Drives a scheduler tick by tick with generated arrivals, simulated
/// measurements and super-provider availability, and evaluates RQ1-RQ3.
ExperimentReport run_scenario(const ScenarioConfig& config,
                              ScenarioObserver* observer = nullptr);

}  // namespace emaas
