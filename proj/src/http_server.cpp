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

#include "emaas/http_server.hpp"

// Bursts of submissions arrive while peers hold keep-alive connections.
#define CPPHTTPLIB_LISTEN_BACKLOG 256
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <thread>

namespace emaas {

namespace {

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void error(httplib::Response& res, int status, const std::string& message,
           const std::string& path = {}) {
  Json body{{"error", message}};
  body["path"] = path.empty() ? Json(nullptr) : Json(path);
  reply(res, status, body);
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw ValidationError("$", std::string("malformed JSON: ") + e.what());
  }
}

std::optional<double> optional_number(const Json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ValidationError(name, "expected a number");
  return it->get<double>();
}

std::string required_string(const Json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end()) throw ValidationError(name, "is required");
  if (!it->is_string()) throw ValidationError(name, "expected a string");
  return it->get<std::string>();
}

}  // namespace

struct HttpServer::Impl {
  Broker& broker;
  httplib::Server server;
  std::thread serve_thread;
  std::thread reaper_thread;
  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;

  explicit Impl(Broker& b) : broker(b) {
    server.new_task_queue = [] { return new httplib::ThreadPool(32); };
    routes();
  }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  // Wraps a handler with bearer-token checks and the error mapping.
  Handler guarded(const std::string& token, Handler h) {
    return [token, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      if (!token.empty() && req.get_header_value("Authorization") != "Bearer " + token) {
        error(res, 401, "missing or invalid bearer token");
        return;
      }
      try {
        h(req, res);
      } catch (const ValidationError& e) {
        error(res, 400, e.what(), e.path());
      } catch (const ContractViolation& e) {
        error(res, 400, e.what(), "$");
      } catch (const NotFound& e) {
        error(res, 404, e.what());
      } catch (const SchedulerError& e) {
        error(res, 409, e.what());
      } catch (const std::exception& e) {
        error(res, 500, e.what());
      }
    };
  }

  void routes() {
    const std::string& client = broker.config().client_token;
    const std::string& peer = broker.config().peer_token;

    server.Post("/jobs", guarded(client, [this](const auto& req, auto& res) {
      auto s = broker.submit_json(parse_body(req));
      Json body = s.status;
      body["created"] = s.created;
      reply(res, s.created ? 201 : 200, body);
    }));
    server.Get("/jobs/:id", guarded(client, [this](const auto& req, auto& res) {
      reply(res, 200, broker.status(req.path_params.at("id")));
    }));
    server.Post("/peers", guarded(peer, [this](const auto& req, auto& res) {
      const Json body = parse_body(req);
      if (!body.is_object()) throw ValidationError("$", "expected an object");
      PeerRole role;
      try {
        role = parse_peer_role(required_string(body, "role"));
      } catch (const ValidationError&) {
        throw;
      } catch (const std::exception& e) {
        throw ValidationError("role", e.what());
      }
      reply(res, 201,
            broker.register_peer(required_string(body, "peer_id"), role,
                                 required_string(body, "device_model")));
    }));
    server.Post("/peers/:id/heartbeat", guarded(peer, [this](const auto& req, auto& res) {
      reply(res, 200, broker.heartbeat(req.path_params.at("id")));
    }));
    server.Post("/peers/:id/result", guarded(peer, [this](const auto& req, auto& res) {
      const Json body = parse_body(req);
      if (!body.is_object()) throw ValidationError("$", "expected an object");
      reply(res, 200,
            broker.result(req.path_params.at("id"), required_string(body, "job_id"),
                          optional_number(body, "energy_j"), optional_number(body, "duration_s")));
    }));
    server.Get("/models/:device", guarded(client, [this](const auto& req, auto& res) {
      reply(res, 200, broker.models(req.path_params.at("device")));
    }));
    server.Get("/metrics", guarded(client, [this](const auto&, auto& res) {
      reply(res, 200, broker.metrics());
    }));
  }

  void start_reaper(std::int64_t interval_ms) {
    if (interval_ms <= 0) return;
    reaper_thread = std::thread([this, interval_ms] {
      std::unique_lock lock(mu);
      while (!cv.wait_for(lock, std::chrono::milliseconds(interval_ms), [this] { return stopping; })) {
        lock.unlock();
        try {
          broker.reap();
        } catch (...) {
        }
        lock.lock();
      }
    });
  }
};

HttpServer::HttpServer(Broker& broker) : impl_(std::make_unique<Impl>(broker)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                              : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0)
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::start(std::int64_t reap_interval_ms) {
  impl_->serve_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  impl_->start_reaper(reap_interval_ms);
}

void HttpServer::run(std::int64_t reap_interval_ms) {
  impl_->start_reaper(reap_interval_ms);
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  impl_->server.stop();
  if (impl_->serve_thread.joinable()) impl_->serve_thread.join();
  if (impl_->reaper_thread.joinable()) impl_->reaper_thread.join();
}

}  // namespace emaas
