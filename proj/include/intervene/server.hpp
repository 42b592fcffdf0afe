#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "intervene/bench.hpp"

namespace httplib {
class Server;
}

namespace intervene {

/// Body of POST /evaluate, already parsed. Exposed so that the service and its tests
/// share one code path. Throws ParseError (bad body), ValidationError (unknown sample)
/// and AdapterError.
nlohmann::json evaluate_request(const RunContext& ctx, const nlohmann::json& body);

/// The completed run reports below `runs_dir`, newest id last per model, reduced to
/// dataset-wide means.
nlohmann::json averages_for_runs(const std::filesystem::path& runs_dir);

/// HTTP front end over one run context. Endpoints:
///   GET  /samples, GET /samples/{id}
///   POST /evaluate
///   GET  /runs, GET /runs/{id}/report, GET /averages
class BenchServer {
 public:
  BenchServer(RunContext ctx, std::filesystem::path runs_dir);
  ~BenchServer();

  /// Binds and serves until stop(). Port 0 picks a free port; see port().
  bool bind(const std::string& host, int port);
  void serve();
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  RunContext ctx_;
  std::filesystem::path runs_dir_;
  std::unique_ptr<httplib::Server> server_;
  int port_ = 0;
};

}  // namespace intervene
