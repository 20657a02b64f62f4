#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "medrag/ingest.hpp"
#include "medrag/pipeline.hpp"

namespace medrag {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::optional<std::filesystem::path> ui_dir;
  LoadOptions load_options;
  /// Maximum age of the cached backend reachability probe.
  std::chrono::seconds probe_ttl{30};
};

/// HTTP face of the engine:
///   POST /api/ingest   {"path": dir} or multipart upload
///   POST /api/query    QueryRequest -> AnswerPayload
///   POST /api/chat     QueryRequest -> text/event-stream (meta, token*, done | error)
///   GET  /api/chunk    ?id=<chunk_id>
///   GET  /healthz
/// Error bodies are {"error": {"code", "stage", "message"}}.
class Service {
 public:
  Service(std::shared_ptr<Engine> engine, ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the port
  /// or -1 on failure.
  int bind();
  /// Serves until stop(). Call after bind().
  void run();
  /// Ends open streams with an error event and stops accepting requests.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Maps an error code to the HTTP status used by the service.
int http_status(ErrorCode code);

}  // namespace medrag
