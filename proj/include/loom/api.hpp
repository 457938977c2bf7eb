#pragma once

#include <string>

#include <loom/service.hpp>

namespace httplib {
class Server;
}

namespace loom {

struct ApiConfig {
  std::string bind_address = "127.0.0.1:8080";  // host:port
  int workers = 0;                              // 0 = hardware concurrency
  size_t queue_capacity = 65536;
  std::string store_root;  // empty = in-memory store
  int callback_timeout_ms = 2000;
};

// Maps every failure the handlers can raise to its HTTP status.
int http_status_for(ErrorCode code);

// Installs all routes on `server`; the service must outlive it.
void register_routes(httplib::Server& server, Service& service);

// Assembles store + runtime + service from `config` and serves until the
// process is stopped.  Returns a process exit code.
int run_server(const ApiConfig& config);

}  // namespace loom
