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

#include "emaas/types.hpp"

#include <numeric>

namespace emaas {

ApiVocabulary::ApiVocabulary(std::vector<std::string> entries)
    : entries_(std::move(entries)) {
  index_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].empty())
      throw ContractViolation("vocabulary entry " + std::to_string(i) +
                              " is empty");
    if (!index_.emplace(entries_[i], i).second)
      throw ContractViolation("duplicate vocabulary entry '" + entries_[i] +
                              "'");
  }
}

std::optional<std::size_t> ApiVocabulary::index_of(std::string_view api) const {
  auto it = index_.find(std::string(api));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double AppManifest::suite_duration_s() const {
  return std::accumulate(
      tests.begin(), tests.end(), 0.0,
      [](double acc, const TestCase& t) { return acc + t.nominal_duration_s; });
}

std::int64_t AppManifest::total_calls() const {
  std::int64_t total = 0;
  for (const auto& [api, count] : api_calls) total += count;
  return total;
}

std::string_view to_string(MeasurementSource source) {
  return source == MeasurementSource::Hardware ? "hardware" : "model";
}

}  // namespace emaas
