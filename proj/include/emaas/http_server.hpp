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

#include <memory>
#include <string>

#include "emaas/broker.hpp"

namespace emaas {

/// JSON-over-HTTP front end for a Broker.
///
///   POST /jobs                     {manifest, context, request_token?}
///   GET  /jobs/{id}
///   POST /peers                    {peer_id, role, device_model}
///   POST /peers/{id}/heartbeat
///   POST /peers/{id}/result        {job_id, energy_j?, duration_s?}
///   GET  /models/{device}
///   GET  /metrics
///
/// Errors are {"error": message, "path": field} with 400 (validation),
/// 401 (token), 404 (unknown id), 409 (scheduler rejection) or 500.
class HttpServer {
 public:
  explicit HttpServer(Broker& broker);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to host:port (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port);
  /// Serves on a background thread and runs the heartbeat reaper every
  /// `reap_interval_ms` (0 disables it).
  void start(std::int64_t reap_interval_ms = 1000);
  /// Serves on the calling thread until stop().
  void run(std::int64_t reap_interval_ms = 1000);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace emaas
