#include "medrag/service.hpp"

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "medrag/error.hpp"
#include "medrag/sse.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace medrag {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyQuestion:
    case ErrorCode::EmptyText:
    case ErrorCode::PathNotFound:
      return 400;
    case ErrorCode::IngestInProgress:
      return 409;
    case ErrorCode::EmptyCorpus:
    case ErrorCode::ExtractionFailed:
      return 422;
    case ErrorCode::BackendUnavailable:
      return 503;
    case ErrorCode::BackendError:
    case ErrorCode::StreamInterrupted:
      return 502;
    case ErrorCode::DimensionMismatch:
    case ErrorCode::EmbedderMismatch:
    case ErrorCode::CorruptIndex:
    case ErrorCode::VersionUnsupported:
      return 500;
  }
  return 500;
}

namespace {

constexpr std::size_t kMaxTopK = 50;

struct QueryRequest {
  std::string question;
  QueryOptions options;
};

json error_json(const Error& e) {
  json body{{"code", to_string(e.code())}, {"stage", to_string(e.stage())}, {"message", e.what()}};
  if (!e.partial().empty()) body["partial"] = e.partial();
  return body;
}

void send_error(httplib::Response& res, const Error& e) {
  res.status = http_status(e.code());
  res.set_content(json{{"error", error_json(e)}}.dump(), "application/json");
}

QueryRequest parse_query(const std::string& body) {
  const auto bad = [](const std::string& m) { return Error(ErrorCode::InvalidArgument, m); };
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    throw bad("request body is not valid JSON");
  }
  if (!j.is_object()) throw bad("request body must be a JSON object");

  QueryRequest q;
  const auto it = j.find("question");
  if (it == j.end() || !it->is_string()) throw bad("'question' must be a string");
  q.question = it->get<std::string>();
  if (q.question.find_first_not_of(" \t\r\n\f\v") == std::string::npos) {
    throw Error(ErrorCode::EmptyQuestion, "question is empty");
  }
  if (auto k = j.find("top_k"); k != j.end() && !k->is_null()) {
    if (!k->is_number_integer() || k->get<long long>() < 1 ||
        k->get<long long>() > static_cast<long long>(kMaxTopK)) {
      throw bad("'top_k' must be an integer in [1, " + std::to_string(kMaxTopK) + "]");
    }
    q.options.top_k = k->get<std::size_t>();
  }
  if (auto t = j.find("temperature"); t != j.end() && !t->is_null()) {
    if (!t->is_number() || t->get<double>() < 0.0) throw bad("'temperature' must be >= 0");
    q.options.temperature = t->get<double>();
  }
  if (auto m = j.find("max_new_tokens"); m != j.end() && !m->is_null()) {
    if (!m->is_number_integer() || m->get<long long>() < 1) {
      throw bad("'max_new_tokens' must be a positive integer");
    }
    q.options.max_new_tokens = m->get<std::size_t>();
  }
  return q;
}

json meta_json(const PromptBundle& bundle, const std::vector<Citation>& citations) {
  auto list = json::array();
  for (const auto& c : citations) list.push_back(to_json(c));
  return {{"citations", std::move(list)}, {"truncated", bundle.truncated}};
}

fs::path make_upload_dir() {
  std::random_device rd;
  const fs::path dir = fs::temp_directory_path() / ("medrag-upload-" + std::to_string(rd()) +
                                                    std::to_string(rd()));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

struct Service::Impl {
  std::shared_ptr<Engine> engine;
  ServiceConfig config;
  httplib::Server server;

  std::atomic<bool> stopping{false};
  std::mutex streams_mutex;
  std::condition_variable streams_cv;
  int active_streams = 0;

  std::mutex probe_mutex;
  std::optional<std::chrono::steady_clock::time_point> probed_at;
  bool reachable = false;

  Impl(std::shared_ptr<Engine> e, ServiceConfig c) : engine(std::move(e)), config(std::move(c)) {
    routes();
  }

  bool backend_reachable() {
    std::lock_guard lock(probe_mutex);
    const auto now = std::chrono::steady_clock::now();
    if (!probed_at || now - *probed_at > config.probe_ttl) {
      reachable = engine->backend().probe();
      probed_at = now;
    }
    return reachable;
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                    std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(
            json{{"error", {{"code", "Internal"}, {"stage", "request"}, {"message", e.what()}}}}.dump(),
            "application/json");
      }
    });

    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      const auto& c = engine->collection();
      const json body{
          {"status", "ok"},
          {"collection", {{"name", c.name()}, {"records", c.size()}, {"dim", c.dim()}}},
          {"backend", {{"kind", to_string(engine->backend().kind())}, {"reachable", backend_reachable()}}}};
      res.set_content(body.dump(), "application/json");
    });

    server.Post("/api/ingest", [this](const httplib::Request& req, httplib::Response& res) {
      handle_ingest(req, res);
    });

    server.Post("/api/query", [this](const httplib::Request& req, httplib::Response& res) {
      const QueryRequest q = parse_query(req.body);
      const Answer answer = engine->answer(q.question, q.options);
      res.set_content(to_json(answer).dump(), "application/json");
    });

    server.Post("/api/chat", [this](const httplib::Request& req, httplib::Response& res) {
      handle_chat(req, res);
    });

    server.Get("/api/chunk", [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = req.get_param_value("id");
      const auto record = engine->collection().get(id);
      if (!record) {
        res.status = 404;
        res.set_content(json{{"error", {{"code", "NotFound"}, {"stage", "search"},
                                        {"message", "no chunk '" + id + "'"}}}}
                            .dump(),
                        "application/json");
        return;
      }
      res.set_content(json{{"chunk_id", record->chunk_id},
                           {"doc_id", record->doc_id},
                           {"text", record->text},
                           {"metadata", record->metadata}}
                          .dump(),
                      "application/json");
    });

    if (config.ui_dir) {
      if (!server.set_mount_point("/", config.ui_dir->string())) {
        spdlog::warn("ui directory {} not found; serving API only", config.ui_dir->string());
      }
    }
  }

  void handle_ingest(const httplib::Request& req, httplib::Response& res) {
    std::optional<fs::path> upload_dir;
    fs::path corpus;
    if (req.is_multipart_form_data()) {
      upload_dir = make_upload_dir();
      for (const auto& [field, file] : req.files) {
        const auto name = fs::path(file.filename).filename();
        if (name.empty() || name == "." || name == "..") continue;
        std::ofstream(*upload_dir / name, std::ios::binary) << file.content;
      }
      corpus = *upload_dir;
    } else {
      json j;
      try {
        j = json::parse(req.body);
      } catch (const json::exception&) {
        throw Error(ErrorCode::InvalidArgument, "request body is not valid JSON", Stage::ingest);
      }
      if (!j.is_object() || !j.contains("path") || !j["path"].is_string()) {
        throw Error(ErrorCode::InvalidArgument, "'path' must be a string", Stage::ingest);
      }
      corpus = j["path"].get<std::string>();
    }

    struct Cleanup {
      std::optional<fs::path>& dir;
      ~Cleanup() {
        std::error_code ec;
        if (dir) fs::remove_all(*dir, ec);
      }
    } cleanup{upload_dir};

    const IngestReport report = engine->ingest(corpus, config.load_options);
    auto failures = json::array();
    for (const auto& f : report.failures) failures.push_back({{"doc_id", f.doc_id}, {"message", f.message}});
    res.set_content(json{{"documents", report.documents},
                         {"chunks", report.chunks},
                         {"collection", report.collection},
                         {"failures", std::move(failures)},
                         {"skipped", report.skipped}}
                        .dump(),
                    "application/json");
  }

  void handle_chat(const httplib::Request& req, httplib::Response& res) {
    QueryRequest q = parse_query(req.body);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [this, q = std::move(q)](std::size_t, httplib::DataSink& sink) {
          {
            std::lock_guard lock(streams_mutex);
            ++active_streams;
          }
          stream_answer(q, sink);
          sink.done();
          {
            std::lock_guard lock(streams_mutex);
            --active_streams;
          }
          streams_cv.notify_all();
          return true;
        });
  }

  void stream_answer(const QueryRequest& q, httplib::DataSink& sink) {
    const auto write = [&sink](std::string_view event, const json& data) {
      const std::string frame = format_sse(event, data.dump());
      return sink.write(frame.data(), frame.size());
    };
    AnswerObserver observer;
    observer.on_context = [&](const PromptBundle& bundle, const std::vector<Citation>& citations) {
      write("meta", meta_json(bundle, citations));
    };
    observer.on_token = [&](const TokenEvent& event) {
      if (stopping) return false;
      return write("token", {{"text", event.text}});
    };

    try {
      const Answer answer = engine->answer(q.question, q.options, observer);
      write("done", {{"finish_reason", to_string(answer.finish_reason)},
                     {"answer", answer.text},
                     {"timing_ms",
                      {{"embed", answer.timing_ms.embed},
                       {"search", answer.timing_ms.search},
                       {"generate", answer.timing_ms.generate}}}});
    } catch (const Error& e) {
      if (stopping) {
        write("error", error_json(Error(ErrorCode::StreamInterrupted, "server is shutting down",
                                        Stage::generation)
                                      .with_partial(e.partial())));
      } else {
        write("error", error_json(e));
      }
    } catch (const std::exception& e) {
      write("error", {{"code", "Internal"}, {"stage", "request"}, {"message", e.what()}});
    }
  }
};

Service::Service(std::shared_ptr<Engine> engine, ServiceConfig config)
    : impl_(std::make_unique<Impl>(std::move(engine), std::move(config))) {}

Service::~Service() { stop(); }

int Service::bind() {
  if (impl_->config.port == 0) return impl_->server.bind_to_any_port(impl_->config.host);
  return impl_->server.bind_to_port(impl_->config.host, impl_->config.port) ? impl_->config.port : -1;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  {
    std::unique_lock lock(impl_->streams_mutex);
    impl_->streams_cv.wait_for(lock, std::chrono::seconds(5),
                               [this] { return impl_->active_streams == 0; });
  }
  impl_->server.stop();
}

}  // namespace medrag
