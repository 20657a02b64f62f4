// medrag: ingest a corpus, ask questions, or serve the HTTP API.

#include <csignal>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "medrag/error.hpp"
#include "medrag/pdf.hpp"
#include "medrag/pipeline.hpp"
#include "medrag/service.hpp"

namespace fs = std::filesystem;
using namespace medrag;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitCorpus = 3;
constexpr int kExitBackend = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyQuestion:
    case ErrorCode::EmptyText:
      return kExitUsage;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::BackendError:
    case ErrorCode::StreamInterrupted:
      return kExitBackend;
    default:
      return kExitCorpus;
  }
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

struct CommonOptions {
  std::string index_dir = env_or("MEDRAG_INDEX_DIR", "medrag-index");
  std::string collection = "medrag";
  std::string embedder = "hash";
  std::string embedder_url = "http://127.0.0.1:8000";
  std::string embedder_model = "all-MiniLM-L6-v2";
  long dim = 384;
  std::string backend = env_or("MEDRAG_BACKEND", "stub");
  std::string backend_url = env_or("MEDRAG_BACKEND_URL", "http://127.0.0.1:8000");
  std::string model = GenerationConfig{}.model;
  std::size_t chunk_size = 1024;
  std::size_t chunk_overlap = 64;
  std::size_t top_k = 5;
  std::size_t budget = 6000;
  std::string prompt_template = "llama2_chat";
  std::size_t max_new_tokens = 1024;
  double temperature = 0.7;
  double repetition_penalty = 1.1;
  bool pdf = false;
  std::string pdf_command;
};

void add_common(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--index", o.index_dir, "Index directory (env MEDRAG_INDEX_DIR)");
  cmd.add_option("--collection", o.collection, "Collection name");
  cmd.add_option("--embedder", o.embedder, "hash | remote")->check(CLI::IsMember({"hash", "remote"}));
  cmd.add_option("--embedder-url", o.embedder_url, "Base URL of the embedding server");
  cmd.add_option("--embedder-model", o.embedder_model, "Model name sent to the embedding server");
  cmd.add_option("--dim", o.dim, "Embedding dimension")->check(CLI::PositiveNumber);
  cmd.add_option("--chunk-size", o.chunk_size, "Chunk size in characters")->check(CLI::PositiveNumber);
  cmd.add_option("--chunk-overlap", o.chunk_overlap, "Overlap between chunks in characters");
}

void add_generation(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--backend", o.backend, "stub | remote (env MEDRAG_BACKEND)")
      ->check(CLI::IsMember({"stub", "remote"}));
  cmd.add_option("--backend-url", o.backend_url, "Inference server URL (env MEDRAG_BACKEND_URL)");
  cmd.add_option("--model", o.model, "Model name sent to the inference server");
  cmd.add_option("--top-k", o.top_k, "Passages to retrieve")->check(CLI::Range(1, 50));
  cmd.add_option("--context-budget", o.budget, "Context budget in characters");
  cmd.add_option("--template", o.prompt_template, "llama2_chat | plain")
      ->check(CLI::IsMember({"llama2_chat", "plain"}));
  cmd.add_option("--max-new-tokens", o.max_new_tokens)->check(CLI::PositiveNumber);
  cmd.add_option("--temperature", o.temperature)->check(CLI::NonNegativeNumber);
  cmd.add_option("--repetition-penalty", o.repetition_penalty)->check(CLI::Range(1.0, 100.0));
}

std::shared_ptr<const Embedder> make_embedder(const CommonOptions& o) {
  if (o.embedder == "remote") {
    RemoteEmbedderConfig c;
    c.base_url = o.embedder_url;
    c.model = o.embedder_model;
    c.dim = o.dim;
    return std::make_shared<RemoteEmbedder>(c);
  }
  return std::make_shared<HashEmbedder>(o.dim);
}

std::shared_ptr<Engine> make_engine(const CommonOptions& o) {
  EngineConfig config;
  config.splitter.chunk_size = o.chunk_size;
  config.splitter.chunk_overlap = o.chunk_overlap;
  config.pipeline.top_k = o.top_k;
  config.pipeline.context_char_budget = o.budget;
  config.pipeline.prompt_template = parse_prompt_template(o.prompt_template);
  config.generation.max_new_tokens = o.max_new_tokens;
  config.generation.temperature = o.temperature;
  config.generation.repetition_penalty = o.repetition_penalty;
  config.generation.model = o.model;
  config.generation.backend = parse_backend_kind(o.backend);
  config.collection_name = o.collection;
  config.index_dir = fs::path(o.index_dir);

  RemoteBackendConfig remote;
  remote.base_url = o.backend_url;
  auto backend = std::shared_ptr<GenerationBackend>(make_backend(config.generation.backend, remote));
  return std::make_shared<Engine>(std::move(config), make_embedder(o), std::move(backend));
}

LoadOptions load_options(const CommonOptions& o) {
  LoadOptions options;
  if (!o.pdf_command.empty()) {
    options.pdf_extractor = command_pdf_extractor(o.pdf_command);
  } else if (o.pdf) {
    options.pdf_extractor = basic_pdf_extractor();
  }
  return options;
}

int run_ingest(const CommonOptions& o, const std::string& dir, const std::string& dump) {
  auto engine = make_engine(o);
  const auto report = engine->ingest(dir, load_options(o));
  for (const auto& f : report.failures) std::cerr << "failed: " << f.doc_id << ": " << f.message << "\n";
  std::cout << report.documents << " documents, " << report.chunks << " chunks\n";
  if (!dump.empty()) {
    std::vector<Chunk> chunks;
    for (const auto& doc : load_directory(dir, load_options(o)).documents) {
      auto part = chunk_document(doc, engine->config().splitter);
      std::move(part.begin(), part.end(), std::back_inserter(chunks));
    }
    write_chunk_dump(dump, chunks);
  }
  return kExitOk;
}

int run_query(const CommonOptions& o, const std::string& question, bool as_json) {
  auto engine = make_engine(o);
  if (as_json) {
    std::cout << to_json(engine->answer(question)).dump() << "\n";
    return kExitOk;
  }
  AnswerObserver observer;
  observer.on_token = [](const TokenEvent& event) {
    std::cout << event.text << std::flush;
    return true;
  };
  const Answer answer = engine->answer(question, {}, observer);
  std::cout << "\n\nSources:\n";
  if (answer.citations.empty()) std::cout << "  (none)\n";
  for (std::size_t i = 0; i < answer.citations.size(); ++i) {
    const auto& c = answer.citations[i];
    std::cout << "  [" << i + 1 << "] " << c.chunk_id << "  score=" << std::fixed
              << std::setprecision(3) << c.score << "  chars " << c.char_start << "-" << c.char_end
              << "\n";
  }
  if (answer.truncated) std::cout << "  (context truncated to fit the budget)\n";
  return kExitOk;
}

int run_serve(const CommonOptions& o, const std::string& host, int port, const std::string& ui_dir) {
  // Signals are taken by a dedicated thread so stop() runs outside a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto engine = make_engine(o);
  ServiceConfig config;
  config.host = host;
  config.port = port;
  if (!ui_dir.empty()) config.ui_dir = fs::path(ui_dir);
  config.load_options = load_options(o);
  Service service(engine, config);

  const int bound = service.bind();
  if (bound < 0) {
    std::cerr << "cannot bind " << host << ":" << port << "\n";
    return kExitUsage;
  }
  std::cout << "listening on http://" << host << ":" << bound << " (collection '"
            << engine->collection().name() << "', " << engine->collection().size() << " records, backend "
            << to_string(engine->backend().kind()) << ")" << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented medical question answering"};
  app.require_subcommand(1);

  CommonOptions o;

  std::string corpus_dir, dump;
  auto* ingest = app.add_subcommand("ingest", "Load, split, embed and index a corpus directory");
  ingest->add_option("dir", corpus_dir, "Corpus directory (.txt, .md, .pdf)")->required();
  ingest->add_option("--dump-chunks", dump, "Write chunks as JSON lines for inspection");
  ingest->add_flag("--pdf", o.pdf, "Extract PDFs with the built-in text-layer extractor");
  ingest->add_option("--pdf-command", o.pdf_command,
                     "External PDF converter, e.g. \"pdftotext -enc UTF-8 {input} -\"");
  add_common(*ingest, o);

  std::string question;
  bool as_json = false;
  auto* query = app.add_subcommand("query", "Answer one question from the index");
  query->add_option("question", question, "Question text")->required();
  query->add_flag("--json", as_json, "Print the answer payload as JSON");
  add_common(*query, o);
  add_generation(*query, o);

  std::string host = "0.0.0.0", ui_dir;
  int port = std::atoi(env_or("MEDRAG_PORT", "8080").c_str());
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API (and optional static UI)");
  serve->add_option("--host", host);
  serve->add_option("--port", port, "Port (env MEDRAG_PORT)")->check(CLI::Range(0, 65535));
  serve->add_option("--ui-dir", ui_dir, "Directory of static UI files");
  serve->add_flag("--pdf", o.pdf, "Accept PDFs on ingest via the built-in extractor");
  serve->add_option("--pdf-command", o.pdf_command, "External PDF converter for ingest");
  add_common(*serve, o);
  add_generation(*serve, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest) return run_ingest(o, corpus_dir, dump);
    if (*query) return run_query(o, question, as_json);
    if (*serve) return run_serve(o, host, port, ui_dir);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.stage()) << "/" << to_string(e.code()) << "]: " << e.what()
              << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCorpus;
  }
  return kExitUsage;
}
