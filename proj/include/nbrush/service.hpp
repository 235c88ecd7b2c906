#pragma once

#include <memory>
#include <optional>
#include <string>

namespace nbrush {

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  int history = 10;            // mesh snapshots kept per session
  std::optional<std::string> remote_endpoint;  // enables the "remote" enhancer
};

// In-memory session service. HTTP routes and the job stream WebSocket share
// one port; each connection gets its own thread. Nothing survives a restart.
//
//   POST /sessions                      body OBJ, or scene JSON, or ?demo=coarse|target
//   GET  /sessions/{id}                 summary
//   GET  /sessions/{id}/mesh[?snapshot=i]
//   GET  /sessions/{id}/views?azimuth&elevation&radius&width&height[&projection&fov]
//   POST /sessions/{id}/enhance
//   POST /sessions/{id}/refine          202 {job_id}, 409 while a job runs
//   GET  /sessions/{id}/metrics?against=<id>[&samples&grid&seed]
//   PUT  /sessions/{id}/masks/{name}    body 8-bit mask PNG
//   GET  /sessions/{id}/masks/{name}
//   GET  /jobs/{id}
//   POST /jobs/{id}/cancel              202
//   WS   /jobs/{id}/stream              JobEvent frames, replayed from the start
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and starts accepting in the background. Throws Error on bind
  // failure. Returns the bound port.
  unsigned short start();
  // Cancels running jobs, waits for them, closes every connection.
  void stop();
  // Blocks until stop() has been called from elsewhere.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nbrush
