#pragma once

#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "forge/inspection.hpp"

namespace httplib {
class Server;
}

namespace forge::inspection {

struct ServerOptions {
  // Empty token disables auth. Otherwise every API route requires
  // "Authorization: Bearer <token>".
  std::string token;
  // Static UI files served at "/ui" without auth.
  std::optional<std::string> static_dir;
};

// JSON HTTP front end over an InspectionService and an optional
// PreferenceStore. Both must outlive the server.
class InspectionServer {
 public:
  InspectionServer(InspectionService& service, PreferenceStore* preferences, ServerOptions options = {});
  ~InspectionServer();

  InspectionServer(const InspectionServer&) = delete;
  InspectionServer& operator=(const InspectionServer&) = delete;

  // Binds (port 0 = any free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks until stop() is called from another thread.
  void serve_forever(const std::string& host, int port);
  void stop();

 private:
  void install_routes();

  InspectionService& service_;
  PreferenceStore* preferences_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace forge::inspection
