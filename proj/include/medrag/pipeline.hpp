#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medrag/embedding.hpp"
#include "medrag/generation.hpp"
#include "medrag/ingest.hpp"
#include "medrag/prompt.hpp"
#include "medrag/vector_store.hpp"

namespace medrag {

struct Citation {
  std::string chunk_id;
  std::string doc_id;
  double score = 0.0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;

  bool operator==(const Citation&) const = default;
};

struct StageTimings {
  double embed = 0.0;
  double search = 0.0;
  double generate = 0.0;
};

struct Answer {
  std::string text;
  std::vector<Citation> citations;  // one per included chunk, prompt order
  bool truncated = false;
  FinishReason finish_reason = FinishReason::stop;
  StageTimings timing_ms;
};

/// Per-request overrides. Unset fields fall back to the engine config.
struct QueryOptions {
  std::optional<std::size_t> top_k;
  std::optional<double> temperature;
  std::optional<std::size_t> max_new_tokens;
};

struct AnswerObserver {
  /// Called once, after retrieval and prompt assembly, before any token.
  std::function<void(const PromptBundle&, const std::vector<Citation>&)> on_context;
  /// Token events only; the terminal event is reported through the return
  /// value or the thrown Error. Returning false cancels generation.
  std::function<bool(const TokenEvent&)> on_token;
};

struct EngineConfig {
  SplitterConfig splitter;
  PipelineConfig pipeline;
  GenerationConfig generation;
  SystemPrompt system = default_system_prompt();
  std::string collection_name = "medrag";
  /// When set, the collection is persisted here after every ingest.
  std::optional<std::filesystem::path> index_dir;
};

struct IngestReport {
  std::size_t documents = 0;
  std::size_t chunks = 0;
  std::string collection;
  std::vector<LoadFailure> failures;
  std::vector<std::string> skipped;
};

/// load -> split -> embed -> store on the way in; embed -> search -> prompt
/// -> generate on the way out. Queries may run concurrently with each other
/// and with one ingest, which publishes its records in a single upsert.
class Engine {
 public:
  Engine(EngineConfig config, std::shared_ptr<const Embedder> embedder,
         std::shared_ptr<GenerationBackend> backend, std::shared_ptr<Collection> collection = nullptr);

  /// Opens {index_dir}/{collection_name} when present, else starts empty.
  static std::shared_ptr<Collection> open_collection(const EngineConfig& config, const Embedder& embedder);

  /// Throws Error(IngestInProgress) when another ingest holds the writer role.
  IngestReport ingest(const std::filesystem::path& corpus_dir, const LoadOptions& options = {});

  /// Errors carry the stage they came from; generation failures also carry
  /// the text streamed before the failure.
  Answer answer(std::string_view question, const QueryOptions& options = {},
                const AnswerObserver& observer = {});

  [[nodiscard]] const Collection& collection() const { return *collection_; }
  [[nodiscard]] const Embedder& embedder() const { return *embedder_; }
  [[nodiscard]] GenerationBackend& backend() { return *backend_; }
  [[nodiscard]] const EngineConfig& config() const { return config_; }

 private:
  EngineConfig config_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<GenerationBackend> backend_;
  std::shared_ptr<Collection> collection_;
  std::mutex ingest_mutex_;
};

/// AnswerPayload wire form: answer, citations, truncated, timing_ms.
nlohmann::json to_json(const Answer& answer);
nlohmann::json to_json(const Citation& citation);

}  // namespace medrag
