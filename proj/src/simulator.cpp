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

#include "emaas/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

namespace emaas {

// ------------------------------------------------------------ ground truth

GroundTruthPowerModel make_ground_truth(std::string device_model, VectorXd w_star,
                                        const ApiVocabulary& vocab,
                                        std::size_t complexity_count,
                                        const std::vector<std::string>& ood_api_set,
                                        double ood_penalty_w, double ood_spread,
                                        double noise_sigma_w) {
  GroundTruthPowerModel gt;
  gt.device_model = std::move(device_model);
  gt.layout = {vocab.size(), complexity_count};
  if (w_star.size() != static_cast<Eigen::Index>(gt.layout.dimension() + 1))
    throw ContractViolation("ground truth weights have dimension " +
                            std::to_string(w_star.size()) + ", expected " +
                            std::to_string(gt.layout.dimension() + 1));
  if (!w_star.allFinite()) throw ContractViolation("ground truth weights must be finite");
  if (!(noise_sigma_w >= 0.0) || !std::isfinite(noise_sigma_w))
    throw ContractViolation("noise sigma must be finite and non-negative");
  if (!(ood_spread >= 0.0 && ood_spread <= 1.0))
    throw ContractViolation("ood spread must lie in [0, 1]");
  if (!std::isfinite(ood_penalty_w)) throw ContractViolation("ood penalty must be finite");
  gt.w_star = std::move(w_star);
  for (const auto& api : ood_api_set)
    if (auto idx = vocab.index_of(api)) gt.ood_api_indices.push_back(*idx);
  std::sort(gt.ood_api_indices.begin(), gt.ood_api_indices.end());
  gt.ood_api_indices.erase(std::unique(gt.ood_api_indices.begin(), gt.ood_api_indices.end()),
                           gt.ood_api_indices.end());
  gt.ood_penalty_w = ood_penalty_w;
  gt.ood_spread = ood_spread;
  gt.noise_sigma_w = noise_sigma_w;
  return gt;
}

double ood_mass(const GroundTruthPowerModel& gt, const FeatureVector& x) {
  if (x.size() != static_cast<Eigen::Index>(gt.layout.dimension()))
    throw ContractViolation("feature vector does not match the ground truth layout");
  double mass = x.oov_mass(gt.layout);
  for (auto idx : gt.ood_api_indices) mass += x.values(static_cast<Eigen::Index>(idx));
  return mass;
}

double true_mean_power(const GroundTruthPowerModel& gt, const FeatureVector& x, Rng& rng) {
  const double mass = ood_mass(gt, x);
  double p = affine_predict(gt.w_star, x.values);
  if (mass > 0.0) {
    double factor = 1.0;
    if (gt.ood_spread > 0.0) {
      std::bernoulli_distribution sign(0.5);
      factor = sign(rng) ? 1.0 + gt.ood_spread : 1.0 - gt.ood_spread;
    }
    p += gt.ood_penalty_w * factor * mass;
  }
  return p;
}

double measure_hardware(const GroundTruthPowerModel& gt, double true_power_w,
                        double duration_s, Rng& noise) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s))
    throw ContractViolation("measurement duration must be positive and finite");
  double p = true_power_w;
  if (gt.noise_sigma_w > 0.0) {
    std::normal_distribution<double> n(0.0, gt.noise_sigma_w);
    p += n(noise);
  }
  return std::max(0.0, p) * duration_s;
}

double simulate_hardware(const GroundTruthPowerModel& gt, const FeatureVector& x,
                         double duration_s, Rng& rng) {
  const double p = true_mean_power(gt, x, rng);
  return measure_hardware(gt, p, duration_s, rng);
}

// -------------------------------------------------------------- workload

AppManifest generate_app(const AppGenerator& gen, Rng& rng, std::string app_id) {
  std::bernoulli_distribution pick_ood(gen.ood_fraction);
  const bool ood = pick_ood(rng);

  std::vector<std::string> pool;
  if (ood) {
    pool = gen.ood_api_set;
  } else {
    for (const auto& api : gen.vocab.entries())
      if (std::find(gen.ood_api_set.begin(), gen.ood_api_set.end(), api) ==
          gen.ood_api_set.end())
        pool.push_back(api);
  }
  if (pool.empty())
    throw ContractViolation(ood ? "ood api set is empty" : "no in-distribution apis");
  std::shuffle(pool.begin(), pool.end(), rng);

  std::vector<double> weights(pool.size());
  for (std::size_t r = 0; r < pool.size(); ++r)
    weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), gen.zipf_s);
  std::discrete_distribution<std::size_t> zipf(weights.begin(), weights.end());
  std::uniform_int_distribution<std::int64_t> calls(gen.calls_min, gen.calls_max);

  AppManifest m;
  m.app_id = std::move(app_id);
  const std::int64_t total = calls(rng);
  for (std::int64_t i = 0; i < total; ++i) ++m.api_calls[pool[zipf(rng)]];

  for (std::size_t i = 0; i < gen.complexity_names.size(); ++i) {
    std::uniform_real_distribution<double> u(gen.complexity_ranges[i].lo,
                                             gen.complexity_ranges[i].hi);
    m.complexity[gen.complexity_names[i]] = u(rng);
  }
  std::uniform_real_distribution<double> dur(gen.duration_s.lo, gen.duration_s.hi);
  m.tests.push_back({"t0", dur(rng)});
  return m;
}

// ---------------------------------------------------------------- report

namespace {

std::optional<double> ratio(double num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return num / static_cast<double>(den);
}

}  // namespace

std::optional<double> WindowStats::hardware_fraction() const {
  return ratio(static_cast<double>(hardware), hardware + model);
}
std::optional<double> WindowStats::hybrid_mae() const {
  return ratio(hybrid_abs_error_sum, hardware + model);
}
std::optional<double> WindowStats::software_only_mae() const {
  return ratio(software_abs_error_sum, hardware + model);
}

std::optional<double> Confusion::ood_hardware_rate() const {
  return ratio(static_cast<double>(ood_hardware), ood_hardware + ood_model);
}
std::optional<double> Confusion::in_distribution_hardware_rate() const {
  return ratio(static_cast<double>(in_hardware), in_hardware + in_model);
}

std::optional<double> DeviceReport::hardware_fraction() const {
  return ratio(static_cast<double>(hardware), hardware + model);
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json to_json(const WindowStats& w) {
  return {{"start", w.start},
          {"end", w.end},
          {"hardware", w.hardware},
          {"model", w.model},
          {"hardware_fraction", opt(w.hardware_fraction())},
          {"hybrid_mae_w", opt(w.hybrid_mae())},
          {"software_only_mae_w", opt(w.software_only_mae())}};
}

Json to_json(const Confusion& c) {
  return {{"ood_hardware", c.ood_hardware},
          {"ood_model", c.ood_model},
          {"in_distribution_hardware", c.in_hardware},
          {"in_distribution_model", c.in_model},
          {"ood_hardware_rate", opt(c.ood_hardware_rate())},
          {"in_distribution_hardware_rate", opt(c.in_distribution_hardware_rate())}};
}

}  // namespace

Json to_json(const ExperimentReport& r) {
  Json windows = Json::array();
  for (const auto& w : r.windows) windows.push_back(to_json(w));
  Json devices = Json::array();
  for (const auto& d : r.devices)
    devices.push_back({{"device_model", d.device_model},
                       {"submitted", d.submitted},
                       {"hardware", d.hardware},
                       {"model", d.model},
                       {"failed", d.failed},
                       {"hardware_fraction", opt(d.hardware_fraction())}});
  return {{"schema_version", kSchemaVersion},
          {"seed", r.seed},
          {"duration_events", r.duration_events},
          {"submitted", r.submitted},
          {"failed", r.failed},
          {"waiting_at_end", r.waiting_at_end},
          {"running_at_end", r.running_at_end},
          {"events", r.events.size()},
          {"rq1", {{"gate", to_json(r.gate_confusion)},
                   {"routed", to_json(r.routed_confusion)}}},
          {"rq2", {{"overall", to_json(r.overall)},
                   {"final_quarter", to_json(r.final_quarter)}}},
          {"rq3", {{"first_quarter", to_json(r.first_quarter)},
                   {"final_quarter", to_json(r.final_quarter)}}},
          {"windows", windows},
          {"devices", devices},
          {"final_models", r.final_models}};
}

// -------------------------------------------------------------- run loop

SchedulerConfig ScenarioConfig::scheduler_config() const {
  SchedulerConfig c;
  c.vocab = generator.vocab;
  c.complexity_names = generator.complexity_names;
  c.gate = gate;
  c.max_wait = max_wait;
  return c;
}

namespace {

VectorXd draw_w_star(const ScenarioConfig& cfg, const std::string& device) {
  Rng rng = named_stream(cfg.seed, "ground-truth/" + device);
  const auto& gen = cfg.generator;
  const std::size_t d_api = gen.vocab.size();
  const std::size_t d_cx = gen.complexity_names.size();
  VectorXd w(static_cast<Eigen::Index>(d_api + d_cx + 2));
  std::uniform_real_distribution<double> intercept(0.6, 1.2);
  std::uniform_real_distribution<double> api(0.0, 1.5);
  std::uniform_real_distribution<double> cx(0.0, 0.5);
  Eigen::Index k = 0;
  w(k++) = intercept(rng);
  for (std::size_t i = 0; i < d_api; ++i) w(k++) = api(rng);
  for (std::size_t i = 0; i < d_cx; ++i) {
    const double hi = std::max(std::abs(gen.complexity_ranges[i].hi), 1e-9);
    w(k++) = cx(rng) / hi;  // contributes at most 0.5 W at the top of the range
  }
  w(k++) = api(rng);
  return w;
}

std::uint64_t draw_ticks(double mean, Rng& rng) {
  std::exponential_distribution<double> e(1.0 / mean);
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(e(rng))));
}

std::string numbered(const char* prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

struct SimJob {
  std::string device;
  double true_power_w = 0.0;
  double software_estimate_w = 0.0;
  bool ood = false;
  bool routed = false;
  bool counted_rq1 = false;
};

struct Pending {
  std::string job_id;
  std::string peer_id;
  bool hardware = true;
};

struct SuperProvider {
  std::string peer_id;
  bool available = true;
  std::uint64_t next_toggle = 0;
};

class Runner {
 public:
  Runner(const ScenarioConfig& cfg, ScenarioObserver* observer)
      : cfg_(cfg),
        observer_(observer),
        sched_(cfg.scheduler_config()),
        arrivals_(named_stream(cfg.seed, "arrivals")),
        app_gen_(named_stream(cfg.seed, "app-gen")),
        truth_(named_stream(cfg.seed, "truth")),
        noise_(named_stream(cfg.seed, "noise")),
        busy_(named_stream(cfg.seed, "busy-cycle")) {
    for (const auto& d : cfg.devices) {
      VectorXd w = d.ground_truth.w_star ? *d.ground_truth.w_star : draw_w_star(cfg, d.device_model);
      truth_models_.emplace(
          d.device_model,
          make_ground_truth(d.device_model, std::move(w), cfg.generator.vocab,
                            cfg.generator.complexity_names.size(), cfg.generator.ood_api_set,
                            d.ground_truth.ood_penalty_w, d.ground_truth.ood_spread,
                            d.ground_truth.noise_sigma_w));
    }
    const std::uint64_t n_windows = cfg.windows;
    const std::uint64_t width = (cfg.duration_events + n_windows - 1) / n_windows;
    for (std::uint64_t i = 0; i < n_windows; ++i)
      report_.windows.push_back(
          {i * width, std::min(cfg.duration_events, (i + 1) * width), 0, 0, 0.0, 0.0});
    const std::uint64_t quarter = cfg.duration_events / 4;
    report_.first_quarter.start = 0;
    report_.first_quarter.end = quarter;
    report_.final_quarter.start = cfg.duration_events - quarter;
    report_.final_quarter.end = cfg.duration_events;
    report_.overall.end = cfg.duration_events;
  }

  ExperimentReport run() {
    report_.seed = cfg_.seed;
    report_.duration_events = cfg_.duration_events;
    snapshot();
    register_peers();
    for (std::uint64_t t = 0; t < cfg_.duration_events; ++t) {
      if (t > sched_.now()) {
        sched_.advance_clock(t);
        flush();
      }
      complete_due(t);
      cycle_super_providers(t);
      arrive();
    }
    snapshot();
    finish();
    return std::move(report_);
  }

 private:
  void flush() {
    auto decisions = sched_.take_decisions();
    for (const auto& d : decisions) {
      log_.append(EventKind::Decision, sched_.now(), to_json(d));
      on_decision(d);
    }
    if (observer_) observer_->on_step(sched_, decisions);
  }

  void on_decision(const Decision& d) {
    auto it = sim_jobs_.find(d.job_id);
    if (it == sim_jobs_.end()) return;
    SimJob& sj = it->second;
    if (!sj.routed) {
      sj.routed = true;
      if (d.hardware_samples >= cfg_.rq1_min_hardware_samples && d.outcome != Outcome::Fail) {
        sj.counted_rq1 = true;
        const bool hw = !d.gate_passed;
        auto& c = report_.gate_confusion;
        ++(sj.ood ? (hw ? c.ood_hardware : c.ood_model) : (hw ? c.in_hardware : c.in_model));
      }
    }
    if (d.outcome == Outcome::AssignHardware || d.outcome == Outcome::AssignModel) {
      const bool hw = d.outcome == Outcome::AssignHardware;
      std::uint64_t ticks = 1;
      if (hw) {
        const double suite = sched_.job(d.job_id).manifest.suite_duration_s();
        ticks = std::max<std::uint64_t>(
            1, static_cast<std::uint64_t>(std::ceil(suite / cfg_.tick_seconds)));
      }
      pending_.emplace(std::make_pair(sched_.now() + ticks, pending_counter_++),
                       Pending{d.job_id, *d.peer_id, hw});
    }
  }

  void snapshot() {
    log_.append(EventKind::ModelSnapshotRef, sched_.now(),
                snapshot_payload(sched_.config(), sched_.registry()));
  }

  void register_peers() {
    for (const auto& d : cfg_.devices) {
      for (int i = 0; i < d.super_providers; ++i) {
        SuperProvider sp{d.device_model + "-sp" + std::to_string(i), true, 0};
        if (cfg_.busy_cycle.mean_unavailable_ticks > 0.0)
          sp.next_toggle = draw_ticks(cfg_.busy_cycle.mean_available_ticks, busy_);
        peer({PeerEventKind::Register, sp.peer_id, PeerRole::SuperProvider, d.device_model});
        supers_.push_back(sp);
      }
      for (int i = 0; i < d.providers; ++i)
        peer({PeerEventKind::Register, d.device_model + "-p" + std::to_string(i),
              PeerRole::Provider, d.device_model});
    }
  }

  void peer(const PeerEvent& e) {
    log_.append(EventKind::PeerEvent, sched_.now(), to_json(e));
    sched_.peer_event(e);
    flush();
  }

  // Owners reclaim a device only between jobs; the device rejoins by heartbeat.
  void cycle_super_providers(std::uint64_t t) {
    if (cfg_.busy_cycle.mean_unavailable_ticks <= 0.0) return;
    for (auto& sp : supers_) {
      if (t < sp.next_toggle) continue;
      if (sp.available) {
        if (sched_.registry().peers.at(sp.peer_id).state != PeerState::Idle) continue;
        peer({PeerEventKind::Offline, sp.peer_id, PeerRole::SuperProvider, {}});
        sp.available = false;
        sp.next_toggle = t + draw_ticks(cfg_.busy_cycle.mean_unavailable_ticks, busy_);
      } else {
        peer({PeerEventKind::Heartbeat, sp.peer_id, PeerRole::SuperProvider, {}});
        sp.available = true;
        sp.next_toggle = t + draw_ticks(cfg_.busy_cycle.mean_available_ticks, busy_);
      }
    }
  }

  void arrive() {
    std::uint64_t k = 0;
    if (cfg_.arrival_rate > 0.0) {
      std::poisson_distribution<std::uint64_t> n(cfg_.arrival_rate);
      k = n(arrivals_);
    }
    std::uniform_int_distribution<std::size_t> pick(0, cfg_.devices.size() - 1);
    for (std::uint64_t i = 0; i < k; ++i) {
      const std::string& device = cfg_.devices[pick(arrivals_)].device_model;
      const std::uint64_t n = ++job_counter_;
      AppManifest app = generate_app(cfg_.generator, app_gen_, numbered("app-", n));
      ExecutionContext ctx{device, "android-9", 28, "espresso"};
      const std::string job_id = numbered("job-", n);

      SimJob sj;
      sj.device = device;
      const auto& gt = truth_models_.at(device);
      const FeatureVector x = extract_features(app, cfg_.generator.vocab,
                                               cfg_.generator.complexity_names);
      sj.ood = ood_mass(gt, x) > 0.0;
      sj.true_power_w = true_mean_power(gt, x, truth_);
      sim_jobs_.emplace(job_id, sj);

      log_.append(EventKind::JobSubmitted, sched_.now(), job_submitted_payload(job_id, app, ctx));
      const Job& job = sched_.submit(job_id, std::move(app), std::move(ctx));
      if (const DeviceModels* m = sched_.models(device))
        sim_jobs_.at(job_id).software_estimate_w = estimate_power(m->energy, job.features);
      ++report_.submitted;
      flush();
    }
  }

  void complete_due(std::uint64_t t) {
    while (!pending_.empty() && pending_.begin()->first.first <= t) {
      const Pending p = pending_.begin()->second;
      pending_.erase(pending_.begin());
      const Job* job = sched_.find_job(p.job_id);
      if (!job || job->state != JobState::Running || job->peer_id != p.peer_id) continue;
      SimJob& sj = sim_jobs_.at(p.job_id);
      std::optional<MeasurementRecord> rec;
      if (p.hardware) {
        const double dt = job->manifest.suite_duration_s();
        const double energy = measure_hardware(truth_models_.at(sj.device), sj.true_power_w,
                                               dt, noise_);
        rec = sched_.complete_hardware(p.job_id, p.peer_id, energy, dt);
        log_.append(EventKind::HardwareResult, sched_.now(),
                    hardware_result_payload(p.job_id, p.peer_id, energy, dt, rec));
      } else {
        rec = sched_.complete_model(p.job_id, p.peer_id);
        log_.append(EventKind::ModelResult, sched_.now(),
                    model_result_payload(p.job_id, p.peer_id, *rec));
      }
      if (rec) account(sj, *rec, t);
      if (observer_ && p.hardware && rec) observer_->on_hardware_completed(sj.device);
      flush();
      if (p.hardware) {
        if (cfg_.snapshot_every > 0 && ++hardware_results_ % cfg_.snapshot_every == 0)
          snapshot();
      }
    }
  }

  void account(const SimJob& sj, const MeasurementRecord& rec, std::uint64_t t) {
    const bool hw = rec.source == MeasurementSource::Hardware;
    const double hybrid = std::abs(rec.mean_power_w() - sj.true_power_w);
    const double software = std::abs(sj.software_estimate_w - sj.true_power_w);
    auto add = [&](WindowStats& w) {
      if (t < w.start || t >= w.end) return;
      ++(hw ? w.hardware : w.model);
      w.hybrid_abs_error_sum += hybrid;
      w.software_abs_error_sum += software;
    };
    for (auto& w : report_.windows) add(w);
    add(report_.first_quarter);
    add(report_.final_quarter);
    add(report_.overall);
    if (sj.counted_rq1) {
      auto& c = report_.routed_confusion;
      ++(sj.ood ? (hw ? c.ood_hardware : c.ood_model) : (hw ? c.in_hardware : c.in_model));
    }
  }

  void finish() {
    std::map<std::string, DeviceReport> per_device;
    for (const auto& d : cfg_.devices) per_device[d.device_model].device_model = d.device_model;
    for (const auto& id : sched_.job_order()) {
      const Job& j = sched_.job(id);
      DeviceReport& dr = per_device[j.context.device_model];
      if (!j.retry_of) ++dr.submitted;
      switch (j.state) {
        case JobState::Completed:
          ++(j.record && j.record->source == MeasurementSource::Hardware ? dr.hardware : dr.model);
          break;
        case JobState::Failed:
          ++dr.failed;
          ++report_.failed;
          break;
        case JobState::Running:
          ++report_.running_at_end;
          break;
        default:
          ++report_.waiting_at_end;
          break;
      }
    }
    for (const auto& d : cfg_.devices) report_.devices.push_back(per_device[d.device_model]);
    report_.final_models = models_to_json(sched_.registry());
    report_.events = log_.events();
    if (observer_) observer_->on_finish(sched_);
  }

  const ScenarioConfig& cfg_;
  ScenarioObserver* observer_;
  Scheduler sched_;
  EventLog log_;
  Rng arrivals_;
  Rng app_gen_;
  Rng truth_;
  Rng noise_;
  Rng busy_;
  std::map<std::string, GroundTruthPowerModel> truth_models_;
  std::unordered_map<std::string, SimJob> sim_jobs_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, Pending> pending_;
  std::vector<SuperProvider> supers_;
  std::uint64_t pending_counter_ = 0;
  std::uint64_t job_counter_ = 0;
  std::uint64_t hardware_results_ = 0;
  ExperimentReport report_;
};

}  // namespace

ExperimentReport run_scenario(const ScenarioConfig& config, ScenarioObserver* observer) {
  validate(config);
  return Runner(config, observer).run();
}

}  // namespace emaas
