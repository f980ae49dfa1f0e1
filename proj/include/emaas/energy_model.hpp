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
#include <string>
#include <vector>

#include "emaas/linalg.hpp"
#include "emaas/types.hpp"

namespace emaas {

/// Hyper-parameters shared by the per-device energy and reliability models.
struct GateConfig {
  double theta_w = 0.25;
  std::uint64_t n_min = 30;
  double forgetting = 0.999;
  double initial_covariance = 1e6;

  friend bool operator==(const GateConfig&, const GateConfig&) = default;
};

/// Online affine model of mean power (watts) for one device model.
struct EnergyModel {
  std::string device_model;
  RlsState<double> rls;

  const VectorXd& weights() const { return rls.weights; }
  std::uint64_t samples() const { return rls.samples; }
};

/// Online affine model of the energy model's absolute power error, plus the
/// threshold that decides whether estimates may be returned.
struct ReliabilityModel {
  std::string device_model;
  RlsState<double> rls;
  double theta_w = 0.25;
  std::uint64_t n_min = 30;

  const VectorXd& weights() const { return rls.weights; }
  std::uint64_t samples() const { return rls.samples; }
};

EnergyModel make_energy_model(std::string device_model, std::size_t feature_dim,
                              const GateConfig& config = {});
ReliabilityModel make_reliability_model(std::string device_model,
                                        std::size_t feature_dim,
                                        const GateConfig& config = {});

/// API counts become frequencies over the manifest's total calls; calls
/// outside `vocab` are pooled into the trailing OOV entry. Complexity metrics
/// are copied in `complexity_names` order, missing ones as 0.
FeatureVector extract_features(const AppManifest& manifest,
                               const ApiVocabulary& vocab,
                               const std::vector<std::string>& complexity_names);

/// max(0, w . [1, x]).
double estimate_power(const EnergyModel& model, const FeatureVector& x);

double estimate_energy(const EnergyModel& model, const FeatureVector& x,
                       double duration_s);

/// Signed power error (E_measured - E_estimated) / duration, in watts.
double power_error(double measured_j, double estimated_j, double duration_s);

/// RLS step towards the observed mean power measured_j / duration_s.
EnergyModel update_energy_model(const EnergyModel& model, const FeatureVector& x,
                                double measured_j, double duration_s);

/// RLS step towards |epsilon|.
ReliabilityModel update_reliability_model(const ReliabilityModel& rc,
                                          const FeatureVector& x,
                                          double epsilon_w);

double predict_abs_error(const ReliabilityModel& rc, const FeatureVector& x);

/// n_r >= n_min and predicted |epsilon| <= theta (inclusive).
bool is_reliable(const ReliabilityModel& rc, const FeatureVector& x);

}  // namespace emaas
