#include "medrag/pipeline.hpp"

#include <charconv>
#include <chrono>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "medrag/error.hpp"

namespace fs = std::filesystem;

namespace medrag {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::size_t metadata_size(const Metadata& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) return 0;
  std::size_t value = 0;
  std::from_chars(it->second.data(), it->second.data() + it->second.size(), value);
  return value;
}

}  // namespace

Engine::Engine(EngineConfig config, std::shared_ptr<const Embedder> embedder,
               std::shared_ptr<GenerationBackend> backend, std::shared_ptr<Collection> collection)
    : config_(std::move(config)),
      embedder_(std::move(embedder)),
      backend_(std::move(backend)),
      collection_(std::move(collection)) {
  if (!embedder_ || !backend_) throw Error(ErrorCode::InvalidArgument, "engine needs an embedder and a backend");
  config_.splitter.validate();
  config_.pipeline.validate(config_.splitter.chunk_size);
  config_.generation.validate();
  if (!collection_) collection_ = open_collection(config_, *embedder_);
  if (collection_->embedder_id() != embedder_->spec().embedder_id) {
    throw Error(ErrorCode::EmbedderMismatch,
                "index was built with '" + collection_->embedder_id() + "', engine embeds with '" +
                    embedder_->spec().embedder_id + "'",
                Stage::search);
  }
}

std::shared_ptr<Collection> Engine::open_collection(const EngineConfig& config, const Embedder& embedder) {
  if (config.index_dir) {
    const fs::path dir = *config.index_dir / config.collection_name;
    if (fs::exists(dir / "manifest")) return std::make_shared<Collection>(Collection::load(dir));
  }
  return std::make_shared<Collection>(config.collection_name, embedder.spec().embedder_id,
                                      embedder.spec().dim);
}

IngestReport Engine::ingest(const fs::path& corpus_dir, const LoadOptions& options) {
  std::unique_lock writer(ingest_mutex_, std::try_to_lock);
  if (!writer.owns_lock()) {
    throw Error(ErrorCode::IngestInProgress, "an ingestion is already running", Stage::ingest);
  }

  LoadReport loaded = load_directory(corpus_dir, options);
  IngestReport report;
  report.collection = collection_->name();
  report.failures = std::move(loaded.failures);
  report.skipped = std::move(loaded.skipped);

  std::vector<VectorRecord> records;
  std::vector<std::string> replaced;
  for (const auto& doc : loaded.documents) {
    try {
      const auto chunks = chunk_document(doc, config_.splitter);
      std::vector<std::string> texts;
      texts.reserve(chunks.size());
      for (const auto& c : chunks) texts.push_back(c.text);
      auto vectors = embedder_->embed_batch(texts);

      for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto& c = chunks[i];
        records.push_back({c.chunk_id,
                           c.doc_id,
                           std::move(vectors[i]),
                           c.text,
                           {{"source_path", doc.source_path},
                            {"seq", std::to_string(c.seq)},
                            {"char_start", std::to_string(c.char_start)},
                            {"char_end", std::to_string(c.char_end)}},
                           embedder_->spec().embedder_id});
      }
      replaced.push_back(doc.doc_id);
      ++report.documents;
      report.chunks += chunks.size();
    } catch (const Error& e) {
      spdlog::warn("skipping {}: {}", doc.doc_id, e.what());
      report.failures.push_back({doc.doc_id, e.what()});
    }
  }
  if (report.documents == 0) {
    throw Error(ErrorCode::EmptyCorpus, "no document could be ingested from " + corpus_dir.string(),
                Stage::ingest);
  }

  collection_->upsert(records, replaced);
  if (config_.index_dir) collection_->save(*config_.index_dir);
  return report;
}

Answer Engine::answer(std::string_view question, const QueryOptions& options,
                      const AnswerObserver& observer) {
  PipelineConfig pipeline = config_.pipeline;
  if (options.top_k) pipeline.top_k = *options.top_k;
  GenerationConfig generation = config_.generation;
  if (options.temperature) generation.temperature = *options.temperature;
  if (options.max_new_tokens) generation.max_new_tokens = *options.max_new_tokens;
  try {
    pipeline.validate(config_.splitter.chunk_size);
    generation.validate();
  } catch (Error& e) {
    throw std::move(e).with_stage(Stage::request);
  }

  // Rejects blank questions before any work is done.
  build_prompt(question, {}, config_.system, pipeline);

  Answer answer;
  auto t = Clock::now();
  EmbeddingVector query;
  try {
    query = embedder_->embed(question);
  } catch (Error& e) {
    throw std::move(e).with_stage(Stage::embed);
  }
  answer.timing_ms.embed = elapsed_ms(t);

  t = Clock::now();
  std::vector<SearchHit> hits;
  try {
    hits = collection_->search(query, pipeline.top_k);
  } catch (Error& e) {
    throw std::move(e).with_stage(Stage::search);
  }
  answer.timing_ms.search = elapsed_ms(t);

  PromptBundle bundle = build_prompt(question, hits, config_.system, pipeline);
  answer.truncated = bundle.truncated;
  for (std::size_t i = 0; i < bundle.included_chunk_ids.size(); ++i) {
    const SearchHit& hit = hits[i];
    answer.citations.push_back({hit.chunk_id, hit.doc_id, hit.score,
                                metadata_size(hit.metadata, "char_start"),
                                metadata_size(hit.metadata, "char_end")});
  }
  if (observer.on_context) observer.on_context(bundle, answer.citations);

  t = Clock::now();
  const auto sink = [&](const TokenEvent& event) {
    if (event.kind != TokenEvent::Kind::token) return true;
    return observer.on_token ? observer.on_token(event) : true;
  };
  StreamResult result = backend_->generate_stream(bundle.rendered, generation, sink);
  answer.timing_ms.generate = elapsed_ms(t);

  if (!result.ok()) {
    throw Error(result.terminal.error_code, result.terminal.message, Stage::generation)
        .with_partial(std::move(result.text));
  }
  answer.text = std::move(result.text);
  answer.finish_reason = result.terminal.finish_reason;
  return answer;
}

nlohmann::json to_json(const Citation& c) {
  return {{"chunk_id", c.chunk_id},
          {"doc_id", c.doc_id},
          {"score", c.score},
          {"char_start", c.char_start},
          {"char_end", c.char_end}};
}

nlohmann::json to_json(const Answer& a) {
  auto citations = nlohmann::json::array();
  for (const auto& c : a.citations) citations.push_back(to_json(c));
  return {{"answer", a.text},
          {"citations", std::move(citations)},
          {"truncated", a.truncated},
          {"timing_ms",
           {{"embed", a.timing_ms.embed},
            {"search", a.timing_ms.search},
            {"generate", a.timing_ms.generate}}}};
}

}  // namespace medrag
