#pragma once

// JSON HTTP front end for SessionStore under the /v1 prefix.
//
//   POST /v1/sessions                    create; 201 with the first proposal
//   GET  /v1/sessions                    list (no transcripts)
//   GET  /v1/sessions/{id}               full view
//   GET  /v1/sessions/{id}/transcript    raw event log
//   POST /v1/sessions/{id}/results       {"results": [..], "round"?: r}
//   POST /v1/sessions/{id}/abort
//
// Mutations wait for the resulting computation unless called with
// ?async=true, in which case they answer 202 with status "computing".
// Errors are {"code", "message", "field"?} with 400, 404 or 409.

#include <memory>
#include <string>

#include "dope/service.hpp"

namespace dope {

struct ServerOptions {
  std::filesystem::path data_dir = "dope-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 1;
};

/// Reads DOPE_DATA_DIR, DOPE_BIND_ADDR (host:port) and DOPE_WORKERS over the given defaults.
ServerOptions server_options_from_env(ServerOptions defaults = {});

class ApiServer {
 public:
  explicit ApiServer(SessionStore& store);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Opens the store and serves until interrupted.
int run_server(const ServerOptions& options);

}  // namespace dope
