#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace medrag {

enum class ErrorCode {
  InvalidArgument,
  PathNotFound,
  ExtractionFailed,
  EmptyCorpus,
  EmptyText,
  EmptyQuestion,
  DimensionMismatch,
  EmbedderMismatch,
  CorruptIndex,
  VersionUnsupported,
  BackendUnavailable,
  BackendError,
  StreamInterrupted,
  IngestInProgress,
};

/// Pipeline stage an error originated in. Reported in HTTP error bodies.
enum class Stage { ingest, embed, search, prompt, generation, request };

std::string_view to_string(ErrorCode code);
std::string_view to_string(Stage stage);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, Stage stage = Stage::request)
      : std::runtime_error(std::move(message)), code_(code), stage_(stage) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  [[nodiscard]] Stage stage() const noexcept { return stage_; }

  /// Text already streamed to the caller before a generation failure.
  [[nodiscard]] const std::string& partial() const noexcept { return partial_; }

  Error& with_stage(Stage stage) & {
    stage_ = stage;
    return *this;
  }
  Error&& with_stage(Stage stage) && {
    stage_ = stage;
    return std::move(*this);
  }
  Error&& with_partial(std::string partial) && {
    partial_ = std::move(partial);
    return std::move(*this);
  }

 private:
  ErrorCode code_;
  Stage stage_;
  std::string partial_;
};

}  // namespace medrag
