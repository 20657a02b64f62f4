#include "medrag/error.hpp"

namespace medrag {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::PathNotFound: return "PathNotFound";
    case ErrorCode::ExtractionFailed: return "ExtractionFailed";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::EmptyQuestion: return "EmptyQuestion";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmbedderMismatch: return "EmbedderMismatch";
    case ErrorCode::CorruptIndex: return "CorruptIndex";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::StreamInterrupted: return "StreamInterrupted";
    case ErrorCode::IngestInProgress: return "IngestInProgress";
  }
  return "Unknown";
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::ingest: return "ingest";
    case Stage::embed: return "embed";
    case Stage::search: return "search";
    case Stage::prompt: return "prompt";
    case Stage::generation: return "generation";
    case Stage::request: return "request";
  }
  return "unknown";
}

}  // namespace medrag
