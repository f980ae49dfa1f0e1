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

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "emaas/broker.hpp"
#include "emaas/event_log.hpp"
#include "emaas/http_server.hpp"
#include "emaas/simulator.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

namespace emaas::cli {

namespace {

namespace fs = std::filesystem;

class Failure : public std::runtime_error {
 public:
  Failure(int code, const std::string& message) : std::runtime_error(message), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

struct Settings {
  bool json = false;
  std::string config_path;
  std::string broker_url;
  std::string token;
};

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure(kValidationError, "cannot read " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Failure(kValidationError, path + ": malformed JSON: " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Failure(kRuntimeError, "cannot write " + path.string());
}

// Flags win over environment variables, which win over the config file.
void resolve(Settings& s) {
  std::string path = s.config_path;
  if (path.empty())
    if (const char* env = std::getenv("EMAAS_CONFIG")) path = env;
  if (!path.empty()) {
    const Json doc = read_json_file(path);
    if (!doc.is_object()) throw Failure(kValidationError, path + ": expected an object");
    if (s.broker_url.empty() && doc.contains("broker_url"))
      s.broker_url = doc["broker_url"].get<std::string>();
    if (s.token.empty() && doc.contains("token")) s.token = doc["token"].get<std::string>();
    if (!s.json && doc.value("output_mode", std::string("table")) == "json") s.json = true;
  }
  if (s.broker_url.empty()) s.broker_url = "http://127.0.0.1:8080";
}

Json request(const Settings& s, const std::string& method, const std::string& path,
             const Json* body = nullptr) {
  if (s.broker_url.rfind("http://", 0) != 0 || s.broker_url.size() <= 7)
    throw Failure(kValidationError, "broker_url must look like http://host:port, got '" +
                                        s.broker_url + "'");
  httplib::Client client(s.broker_url);
  client.set_connection_timeout(5);
  httplib::Headers headers;
  if (!s.token.empty()) headers.emplace("Authorization", "Bearer " + s.token);
  auto res = method == "GET" ? client.Get(path, headers)
                             : client.Post(path, headers, body ? body->dump() : "{}",
                                           "application/json");
  if (!res)
    throw Failure(kRuntimeError, "cannot reach broker at " + s.broker_url + ": " +
                                     httplib::to_string(res.error()));
  Json doc;
  try {
    doc = Json::parse(res->body);
  } catch (const Json::parse_error&) {
    throw Failure(kRuntimeError, "broker returned " + std::to_string(res->status) +
                                     " with a non-JSON body");
  }
  if (res->status >= 400) {
    std::string msg = doc.value("error", std::string("request failed"));
    if (doc.contains("path") && doc["path"].is_string())
      msg = doc["path"].get<std::string>() + ": " + msg;
    throw Failure(res->status == 400 ? kValidationError : kRuntimeError,
                  "broker returned " + std::to_string(res->status) + ": " + msg);
  }
  return doc;
}

std::string fmt(const Json& v) {
  if (v.is_null()) return "-";
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(6) << v.get<double>();
    return os.str();
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void print_fields(std::ostream& out, const std::vector<std::pair<std::string, Json>>& rows) {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.first.size());
  for (const auto& r : rows) out << std::left << std::setw(int(width) + 2) << r.first << fmt(r.second) << '\n';
}

// ------------------------------------------------------------------ submit

int cmd_submit(const Settings& s, const std::string& manifest_path, const ExecutionContext& ctx,
               const std::string& token, std::ostream& out) {
  const Json doc = read_json_file(manifest_path);
  AppManifest manifest;
  try {
    manifest = manifest_from_json(doc.contains("manifest") ? doc["manifest"] : doc);
  } catch (const ValidationError& e) {
    throw Failure(kValidationError, e.what());
  }
  Json body{{"manifest", to_json(manifest)}, {"context", to_json(ctx)}};
  if (!token.empty()) body["request_token"] = token;
  const Json res = request(s, "POST", "/jobs", &body);
  if (s.json) {
    out << Json{{"job_id", res["job_id"]}, {"state", res["state"]}}.dump() << '\n';
  } else {
    out << res["job_id"].get<std::string>() << '\n';
  }
  return kOk;
}

// ------------------------------------------------------------------ status

int cmd_status(const Settings& s, const std::string& job_id, std::ostream& out) {
  const Json st = request(s, "GET", "/jobs/" + job_id);
  if (s.json) {
    out << st.dump() << '\n';
    return kOk;
  }
  const Json& rec = st["record"];
  print_fields(out, {{"job_id", st["job_id"]},
                     {"state", st["state"]},
                     {"device_model", st["device_model"]},
                     {"peer_id", st["peer_id"]},
                     {"queue_position", st["queue_position"]},
                     {"source", rec.is_null() ? Json() : rec["source"]},
                     {"energy_j", rec.is_null() ? Json() : rec["energy_j"]},
                     {"duration_s", rec.is_null() ? Json() : rec["duration_s"]},
                     {"epsilon_w", rec.is_null() ? Json() : rec.value("epsilon_w", Json())},
                     {"failure_reason", st.value("failure_reason", Json())}});
  out << "decisions:\n";
  for (const auto& d : st["decision_trace"])
    out << "  at=" << fmt(d["at"]) << " " << fmt(d["outcome"]) << " peer=" << fmt(d["peer_id"])
        << " |eps|^=" << fmt(d["predicted_abs_error_w"]) << " theta=" << fmt(d["theta_w"])
        << " n=" << fmt(d["hardware_samples"]) << " " << fmt(d["reason"]) << '\n';
  return kOk;
}

// ----------------------------------------------------------------- metrics

int cmd_metrics(const Settings& s, std::ostream& out) {
  const Json m = request(s, "GET", "/metrics");
  if (s.json) {
    out << m.dump() << '\n';
    return kOk;
  }
  print_fields(out, {{"completed_hardware", m["completed_hardware"]},
                     {"completed_model", m["completed_model"]},
                     {"hardware_fraction", m["hardware_fraction"]},
                     {"theta_w", m["theta_w"]},
                     {"n_min", m["n_min"]},
                     {"clock", m["clock"]},
                     {"last_seq", m["last_seq"]}});
  for (const auto& [state, n] : m["jobs"].items()) out << "jobs." << state << "  " << n << '\n';
  for (const auto& [state, n] : m["peers"].items()) out << "peers." << state << "  " << n << '\n';
  for (const auto& [dev, n] : m["queue_depths"].items()) out << "queue." << dev << "  " << n << '\n';
  for (const auto& [dev, v] : m["models"].items())
    out << "model." << dev << "  n=" << v["energy_samples"] << '\n';
  return kOk;
}

// -------------------------------------------------------------- experiment

Json aggregate(const std::vector<std::optional<double>>& values) {
  std::vector<double> v;
  for (const auto& x : values)
    if (x) v.push_back(*x);
  if (v.empty()) return {{"mean", nullptr}, {"min", nullptr}, {"max", nullptr}, {"n", 0}};
  double sum = 0.0;
  for (double x : v) sum += x;
  return {{"mean", sum / double(v.size())},
          {"min", *std::min_element(v.begin(), v.end())},
          {"max", *std::max_element(v.begin(), v.end())},
          {"n", v.size()}};
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json summarize(const ScenarioConfig& base, const std::vector<ExperimentReport>& reports,
               const std::string& rq) {
  Json summary{{"schema_version", kSchemaVersion}, {"rq", rq}, {"scenario", to_json(base)}};
  Json seeds = Json::array();
  for (const auto& r : reports) seeds.push_back(r.seed);
  summary["seeds"] = seeds;

  if (rq == "1" || rq == "all") {
    Json per = Json::array();
    std::vector<std::optional<double>> ood, in;
    for (const auto& r : reports) {
      const auto& c = r.gate_confusion;
      ood.push_back(c.ood_hardware_rate());
      in.push_back(c.in_distribution_hardware_rate());
      per.push_back({{"seed", r.seed},
                     {"ood_jobs", c.ood_hardware + c.ood_model},
                     {"in_distribution_jobs", c.in_hardware + c.in_model},
                     {"ood_hardware_rate", opt(ood.back())},
                     {"in_distribution_hardware_rate", opt(in.back())}});
    }
    summary["rq1"] = {{"per_seed", per},
                      {"ood_hardware_rate", aggregate(ood)},
                      {"in_distribution_hardware_rate", aggregate(in)}};
  }
  if (rq == "2" || rq == "all") {
    Json per = Json::array();
    std::vector<std::optional<double>> hyb, sw;
    std::size_t better = 0;
    for (const auto& r : reports) {
      hyb.push_back(r.overall.hybrid_mae());
      sw.push_back(r.overall.software_only_mae());
      if (hyb.back() && sw.back() && *hyb.back() < *sw.back()) ++better;
      per.push_back({{"seed", r.seed},
                     {"jobs", r.overall.hardware + r.overall.model},
                     {"hybrid_mae_w", opt(hyb.back())},
                     {"software_only_mae_w", opt(sw.back())}});
    }
    summary["rq2"] = {{"per_seed", per},
                      {"hybrid_mae_w", aggregate(hyb)},
                      {"software_only_mae_w", aggregate(sw)},
                      {"seeds_hybrid_better", better}};
  }
  if (rq == "3" || rq == "all") {
    Json per = Json::array();
    std::vector<std::optional<double>> first, last;
    std::size_t decreasing = 0;
    std::vector<std::vector<std::optional<double>>> by_window;
    for (const auto& r : reports) {
      first.push_back(r.first_quarter.hardware_fraction());
      last.push_back(r.final_quarter.hardware_fraction());
      if (first.back() && last.back() && *last.back() < *first.back()) ++decreasing;
      Json series = Json::array();
      by_window.resize(std::max(by_window.size(), r.windows.size()));
      for (std::size_t i = 0; i < r.windows.size(); ++i) {
        series.push_back(opt(r.windows[i].hardware_fraction()));
        by_window[i].push_back(r.windows[i].hardware_fraction());
      }
      per.push_back({{"seed", r.seed},
                     {"first_quarter", opt(first.back())},
                     {"final_quarter", opt(last.back())},
                     {"series", series}});
    }
    Json mean_series = Json::array();
    for (const auto& w : by_window) mean_series.push_back(aggregate(w)["mean"]);
    summary["rq3"] = {{"per_seed", per},
                      {"first_quarter", aggregate(first)},
                      {"final_quarter", aggregate(last)},
                      {"seeds_decreasing", decreasing},
                      {"series_mean", mean_series}};
  }
  return summary;
}

void print_agg(std::ostream& out, const std::string& name, const Json& a) {
  out << "  " << std::left << std::setw(32) << name << "mean " << std::setw(10) << fmt(a["mean"])
      << " min " << std::setw(10) << fmt(a["min"]) << " max " << fmt(a["max"]) << '\n';
}

void print_summary(std::ostream& out, const Json& s) {
  out << "seeds: " << s["seeds"].size() << '\n';
  if (s.contains("rq1")) {
    out << "RQ1 gate routing (after warm-up)\n";
    print_agg(out, "ood -> hardware", s["rq1"]["ood_hardware_rate"]);
    print_agg(out, "in-distribution -> hardware", s["rq1"]["in_distribution_hardware_rate"]);
  }
  if (s.contains("rq2")) {
    out << "RQ2 mean absolute power error (W)\n";
    for (const auto& p : s["rq2"]["per_seed"])
      out << "  seed " << std::left << std::setw(8) << fmt(p["seed"]) << "hybrid "
          << std::setw(10) << fmt(p["hybrid_mae_w"]) << " software-only "
          << fmt(p["software_only_mae_w"]) << '\n';
    print_agg(out, "hybrid", s["rq2"]["hybrid_mae_w"]);
    print_agg(out, "software-only", s["rq2"]["software_only_mae_w"]);
    out << "  hybrid better in " << s["rq2"]["seeds_hybrid_better"] << " of "
        << s["seeds"].size() << " seeds\n";
  }
  if (s.contains("rq3")) {
    out << "RQ3 hardware fraction\n";
    print_agg(out, "first quarter", s["rq3"]["first_quarter"]);
    print_agg(out, "final quarter", s["rq3"]["final_quarter"]);
    out << "  series (mean per window):";
    for (const auto& v : s["rq3"]["series_mean"]) out << ' ' << fmt(v);
    out << "\n  final < first in " << s["rq3"]["seeds_decreasing"] << " of "
        << s["seeds"].size() << " seeds\n";
  }
}

int cmd_experiment(const Settings& s, const std::string& scenario_path, const std::string& rq,
                   std::uint64_t seeds, const std::string& out_dir, bool write_events,
                   unsigned workers, std::ostream& out) {
  ScenarioConfig base;
  try {
    base = scenario_from_json(read_json_file(scenario_path));
  } catch (const ValidationError& e) {
    throw Failure(kValidationError, scenario_path + ": " + e.what());
  }
  if (seeds == 0) throw Failure(kValidationError, "--seeds must be at least 1");

  std::vector<ExperimentReport> reports(seeds);
  std::atomic<std::uint64_t> next{0};
  std::vector<std::string> errors(seeds);
  auto worker = [&] {
    for (std::uint64_t i = next++; i < seeds; i = next++) {
      ScenarioConfig c = base;
      c.seed = base.seed + i;
      try {
        reports[i] = run_scenario(c);
        if (!write_events) reports[i].events.clear();
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(seeds)));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (!e.empty()) throw Failure(kRuntimeError, e);

  fs::create_directories(out_dir);
  for (const auto& r : reports) {
    const std::string tag = "seed-" + std::to_string(r.seed);
    write_file(fs::path(out_dir) / ("report-" + tag + ".json"), to_json(r).dump(2) + "\n");
    if (write_events) {
      std::ostringstream log;
      write_jsonl(r.events, log);
      write_file(fs::path(out_dir) / ("events-" + tag + ".jsonl"), log.str());
    }
  }
  const Json summary = summarize(base, reports, rq);
  write_file(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  if (s.json) {
    out << summary.dump() << '\n';
  } else {
    print_summary(out, summary);
    out << "reports written to " << out_dir << '\n';
  }
  return kOk;
}

// ------------------------------------------------------------------ replay

int cmd_replay(const Settings& s, const std::string& log_path, std::ostream& out,
               std::ostream& err) {
  if (!fs::exists(log_path)) throw Failure(kValidationError, "cannot read " + log_path);
  LoadedLog loaded;
  try {
    loaded = read_jsonl_file(log_path);
  } catch (const ReplayError& e) {
    if (s.json)
      out << Json{{"verdict", "corrupt"}, {"failing_seq", e.seq()}, {"error", e.what()}}.dump()
          << '\n';
    err << "corrupt log: " << e.what() << '\n';
    return kValidationError;
  }
  if (loaded.events.empty() && !loaded.truncated) {
    if (s.json)
      out << Json{{"verdict", "empty log"}}.dump() << '\n';
    else
      out << "empty log\n";
    return kOk;
  }

  ReplayResult r{Scheduler(SchedulerConfig{})};
  try {
    r = replay(loaded.events);
  } catch (const ReplayError& e) {
    if (s.json)
      out << Json{{"verdict", "mismatch"}, {"failing_seq", e.seq()}, {"error", e.what()}}.dump()
          << '\n';
    err << "replay failed: " << e.what() << '\n';
    return kRuntimeError;
  }

  const bool partial = loaded.truncated || r.partial;
  std::string verdict = r.snapshots_checked == 0 ? "unverified"
                        : r.snapshots_match      ? "match"
                                                 : "mismatch";
  Json devices = Json::array();
  for (const auto& [device, m] : r.scheduler.registry().models)
    devices.push_back({{"device_model", device},
                       {"energy_samples", m.energy.samples()},
                       {"reliability_samples", m.reliability.samples()},
                       {"energy_weight_norm", m.energy.weights().norm()},
                       {"reliability_weight_norm", m.reliability.weights().norm()}});
  const Json summary{{"verdict", verdict},
                     {"partial", partial},
                     {"events_applied", r.events_applied},
                     {"decisions_verified", r.decisions_verified},
                     {"snapshots_checked", r.snapshots_checked},
                     {"max_snapshot_difference", r.max_snapshot_difference},
                     {"jobs", r.scheduler.job_order().size()},
                     {"devices", devices}};
  if (s.json) {
    out << summary.dump() << '\n';
  } else {
    out << "verdict: " << verdict << (partial ? " (partial log)" : "") << '\n';
    print_fields(out, {{"events_applied", summary["events_applied"]},
                       {"decisions_verified", summary["decisions_verified"]},
                       {"snapshots_checked", summary["snapshots_checked"]},
                       {"max_snapshot_difference", summary["max_snapshot_difference"]},
                       {"jobs", summary["jobs"]}});
    for (const auto& d : devices)
      out << "device " << fmt(d["device_model"]) << "  n=" << d["energy_samples"]
          << "  |w|=" << fmt(d["energy_weight_norm"])
          << "  reliability n=" << d["reliability_samples"]
          << "  |w_r|=" << fmt(d["reliability_weight_norm"]) << '\n';
  }
  return verdict == "mismatch" ? kRuntimeError : kOk;
}

// ------------------------------------------------------------------- serve

int cmd_serve(const Settings& s, const std::string& config_path, const std::string& listen,
              const std::string& log_path, std::ostream& out) {
  Json doc = read_json_file(config_path);
  if (!listen.empty()) doc["listen"] = listen;
  if (!log_path.empty()) doc["log_path"] = log_path;
  BrokerConfig config;
  try {
    config = broker_config_from_json(doc);
  } catch (const ValidationError& e) {
    throw Failure(kValidationError, config_path + ": " + e.what());
  }

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Broker broker(config);
  HttpServer server(broker);
  const int port = server.bind(config.host, config.port);
  const std::int64_t reap_ms = std::max<std::int64_t>(100, config.heartbeat_timeout_ms / 4);
  server.start(reap_ms);
  if (s.json)
    out << Json{{"listening", config.host + ":" + std::to_string(port)},
                {"log_path", config.log_path.string()}}.dump()
        << std::endl;
  else
    out << "listening on " << config.host << ":" << port << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid energy-measurement broker: client, experiments and replay", "emaas"};
  app.require_subcommand(1);
  Settings s;
  app.add_flag("--json", s.json, "Machine-readable JSON output");
  app.add_option("--config", s.config_path, "Client config file (broker_url, token, output_mode)");
  app.add_option("--broker-url", s.broker_url, "Broker base URL")->envname("EMAAS_BROKER_URL");
  app.add_option("--token", s.token, "Bearer token")->envname("EMAAS_TOKEN");

  std::string manifest_path, device, os_version = "unknown", framework = "unknown", request_token;
  int api_level = 0;
  auto* submit = app.add_subcommand("submit", "Submit an app manifest for measurement");
  submit->add_option("manifest", manifest_path, "AppManifest JSON file")->required();
  submit->add_option("--device", device, "Target device model")->required();
  submit->add_option("--os-version", os_version);
  submit->add_option("--api-level", api_level);
  submit->add_option("--framework", framework);
  submit->add_option("--request-token", request_token, "Idempotency token");

  std::string job_id;
  auto* status = app.add_subcommand("status", "Show a job's state, record and decision trace");
  status->add_option("job_id", job_id)->required();

  auto* metrics = app.add_subcommand("metrics", "Show broker counters and model sizes");

  std::string scenario_path, rq = "all", out_dir = "experiment-out";
  std::uint64_t seeds = 10;
  bool write_events = false;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  auto* experiment = app.add_subcommand("experiment", "Run simulated experiments offline");
  experiment->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  experiment->add_option("--rq", rq, "Research question to summarise")
      ->check(CLI::IsMember({"1", "2", "3", "all"}));
  experiment->add_option("--seeds", seeds, "Number of consecutive seeds");
  experiment->add_option("--out", out_dir, "Directory for report files");
  experiment->add_flag("--events", write_events, "Also write each run's event log");
  experiment->add_option("--workers", workers, "Parallel runs");

  std::string builtin = "default";
  auto* scenario = app.add_subcommand("scenario", "Print a built-in scenario as JSON");
  scenario->add_option("name", builtin)->check(CLI::IsMember({"default", "in-distribution"}));

  std::string log_path;
  auto* replay_cmd = app.add_subcommand("replay", "Replay an event log and verify snapshots");
  replay_cmd->add_option("log", log_path, "Event log (JSON lines)")->required();

  std::string serve_config, listen, serve_log;
  auto* serve = app.add_subcommand("serve", "Run the broker service");
  serve->add_option("--broker-config", serve_config, "Broker config JSON")->required();
  serve->add_option("--listen", listen, "host:port override");
  serve->add_option("--log", serve_log, "Event log path override");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kValidationError;
  }

  try {
    resolve(s);
    if (*submit)
      return cmd_submit(s, manifest_path, ExecutionContext{device, os_version, api_level, framework},
                        request_token, out);
    if (*status) return cmd_status(s, job_id, out);
    if (*metrics) return cmd_metrics(s, out);
    if (*experiment)
      return cmd_experiment(s, scenario_path, rq, seeds, out_dir, write_events, workers, out);
    if (*scenario) {
      out << to_json(builtin == "default" ? default_scenario() : in_distribution_scenario()).dump(2)
          << '\n';
      return kOk;
    }
    if (*replay_cmd) return cmd_replay(s, log_path, out, err);
    if (*serve) return cmd_serve(s, serve_config, listen, serve_log, out);
  } catch (const Failure& f) {
    err << "error: " << f.what() << '\n';
    return f.code();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kValidationError;
}

}  // namespace emaas::cli
