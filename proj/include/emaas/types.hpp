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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emaas/linalg.hpp"

namespace emaas {

/// Ordered list of API-call identifiers that become frequency features.
/// Calls outside the list land in a single out-of-vocabulary bucket.
class ApiVocabulary {
 public:
  ApiVocabulary() = default;
  explicit ApiVocabulary(std::vector<std::string> entries);

  const std::vector<std::string>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::optional<std::size_t> index_of(std::string_view api) const;
  bool contains(std::string_view api) const { return index_of(api).has_value(); }

  friend bool operator==(const ApiVocabulary& a, const ApiVocabulary& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TestCase {
  std::string test_id;
  double nominal_duration_s = 0.0;

  friend bool operator==(const TestCase&, const TestCase&) = default;
};

/// Static-analysis summary of an app and its instrumentation tests.
struct AppManifest {
  std::string app_id;
  std::map<std::string, std::int64_t> api_calls;
  std::map<std::string, double> complexity;
  std::vector<TestCase> tests;

  /// Sum of nominal test durations; the suite's expected runtime.
  double suite_duration_s() const;
  std::int64_t total_calls() const;

  friend bool operator==(const AppManifest&, const AppManifest&) = default;
};

struct ExecutionContext {
  std::string device_model;
  std::string os_version;
  int api_level = 0;
  std::string framework;

  friend bool operator==(const ExecutionContext&, const ExecutionContext&) = default;
};

/// Layout: [API-call frequencies | complexity metrics | OOV mass].
struct FeatureLayout {
  std::size_t api_count = 0;
  std::size_t complexity_count = 0;

  std::size_t dimension() const { return api_count + complexity_count + 1; }
  std::size_t oov_index() const { return api_count + complexity_count; }

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

struct FeatureVector {
  VectorXd values;

  Eigen::Index size() const { return values.size(); }
  auto api_block(const FeatureLayout& layout) const {
    return values.head(static_cast<Eigen::Index>(layout.api_count));
  }
  auto complexity_block(const FeatureLayout& layout) const {
    return values.segment(static_cast<Eigen::Index>(layout.api_count),
                          static_cast<Eigen::Index>(layout.complexity_count));
  }
  double oov_mass(const FeatureLayout& layout) const {
    return values(static_cast<Eigen::Index>(layout.oov_index()));
  }
};

enum class MeasurementSource { Hardware, Model };

std::string_view to_string(MeasurementSource source);

struct MeasurementRecord {
  std::string job_id;
  double energy_j = 0.0;
  double duration_s = 0.0;
  MeasurementSource source = MeasurementSource::Hardware;
  std::optional<double> epsilon;  // watts; hardware records only
  std::uint64_t timestamp = 0;

  double mean_power_w() const { return energy_j / duration_s; }
};

}  // namespace emaas
