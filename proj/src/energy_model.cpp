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

#include "emaas/energy_model.hpp"

#include <algorithm>
#include <cmath>

namespace emaas {

namespace {

void require_positive_duration(double duration_s) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s))
    throw ContractViolation("duration must be a positive finite number of seconds");
}

}  // namespace

EnergyModel make_energy_model(std::string device_model, std::size_t feature_dim,
                              const GateConfig& config) {
  return EnergyModel{
      std::move(device_model),
      make_rls<double>(static_cast<Eigen::Index>(feature_dim) + 1,
                       config.initial_covariance, config.forgetting)};
}

ReliabilityModel make_reliability_model(std::string device_model,
                                        std::size_t feature_dim,
                                        const GateConfig& config) {
  if (!(config.theta_w > 0.0)) throw ContractViolation("theta must be positive");
  if (config.n_min < 1) throw ContractViolation("n_min must be at least 1");
  return ReliabilityModel{
      std::move(device_model),
      make_rls<double>(static_cast<Eigen::Index>(feature_dim) + 1,
                       config.initial_covariance, config.forgetting),
      config.theta_w, config.n_min};
}

FeatureVector extract_features(const AppManifest& manifest,
                               const ApiVocabulary& vocab,
                               const std::vector<std::string>& complexity_names) {
  const FeatureLayout layout{vocab.size(), complexity_names.size()};
  FeatureVector x{VectorXd::Zero(static_cast<Eigen::Index>(layout.dimension()))};

  std::int64_t total = 0;
  std::int64_t oov = 0;
  for (const auto& [api, count] : manifest.api_calls) {
    if (count < 0)
      throw ContractViolation("api call count for '" + api + "' is negative");
    total += count;
    if (auto idx = vocab.index_of(api)) {
      x.values(static_cast<Eigen::Index>(*idx)) += static_cast<double>(count);
    } else {
      oov += count;
    }
  }
  if (total > 0) {
    const double denom = static_cast<double>(total);
    x.values.head(static_cast<Eigen::Index>(layout.api_count)) /= denom;
    x.values(static_cast<Eigen::Index>(layout.oov_index())) =
        static_cast<double>(oov) / denom;
  }

  for (std::size_t i = 0; i < complexity_names.size(); ++i) {
    auto it = manifest.complexity.find(complexity_names[i]);
    if (it != manifest.complexity.end())
      x.values(static_cast<Eigen::Index>(layout.api_count + i)) = it->second;
  }
  if (!x.values.allFinite())
    throw ContractViolation("manifest '" + manifest.app_id +
                            "' has a non-finite complexity metric");
  return x;
}

double estimate_power(const EnergyModel& model, const FeatureVector& x) {
  return std::max(0.0, affine_predict(model.rls.weights, x.values));
}

double estimate_energy(const EnergyModel& model, const FeatureVector& x,
                       double duration_s) {
  require_positive_duration(duration_s);
  return estimate_power(model, x) * duration_s;
}

double power_error(double measured_j, double estimated_j, double duration_s) {
  require_positive_duration(duration_s);
  return (measured_j - estimated_j) / duration_s;
}

EnergyModel update_energy_model(const EnergyModel& model, const FeatureVector& x,
                                double measured_j, double duration_s) {
  require_positive_duration(duration_s);
  if (!std::isfinite(measured_j))
    throw ContractViolation("measured energy must be finite");
  return EnergyModel{model.device_model,
                     rls_update(model.rls, affine_regressor(x.values),
                                measured_j / duration_s)};
}

ReliabilityModel update_reliability_model(const ReliabilityModel& rc,
                                          const FeatureVector& x,
                                          double epsilon_w) {
  if (!std::isfinite(epsilon_w))
    throw ContractViolation("power error must be finite");
  ReliabilityModel next = rc;
  next.rls = rls_update(rc.rls, affine_regressor(x.values), std::abs(epsilon_w));
  return next;
}

double predict_abs_error(const ReliabilityModel& rc, const FeatureVector& x) {
  return std::max(0.0, affine_predict(rc.rls.weights, x.values));
}

bool is_reliable(const ReliabilityModel& rc, const FeatureVector& x) {
  if (rc.rls.samples < rc.n_min) return false;
  return predict_abs_error(rc, x) <= rc.theta_w;
}

}  // namespace emaas
