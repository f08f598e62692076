#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "narrmem/service.hpp"

namespace narrmem::service {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  // Static participant UI mounted at /app; a stub page is served without it.
  std::optional<std::filesystem::path> static_dir;
};

// JSON over HTTP in front of ExperimentService. Routes are listed in
// docs/api.md.
class HttpServer {
 public:
  HttpServer(ExperimentService& service, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds the socket and returns the port. Throws ConfigError on failure.
  int bind();
  // Serves until stop(); binds first if needed.
  void listen();
  // listen() on a background thread; returns once the socket is bound.
  int start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// HTTP status for a library error code.
int http_status(const std::string& error_code);

}  // namespace narrmem::service
