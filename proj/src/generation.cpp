#include "medrag/generation.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "medrag/sse.hpp"
#include "medrag/utf8.hpp"

namespace medrag {

namespace {

std::pair<time_t, time_t> split_timeout(std::chrono::milliseconds ms) {
  return {static_cast<time_t>(ms.count() / 1000), static_cast<time_t>((ms.count() % 1000) * 1000)};
}

// Delivers an event to the sink and records it. Returns false on cancel.
class StreamRecorder {
 public:
  explicit StreamRecorder(const TokenSink& sink) : sink_(sink) {}

  bool token(std::string text) {
    result_.text += text;
    return deliver(TokenEvent::token(std::move(text)));
  }

  StreamResult finish(TokenEvent terminal) {
    if (!cancelled_) deliver(terminal);
    result_.terminal = std::move(terminal);
    return std::move(result_);
  }

  StreamResult cancelled() {
    result_.terminal = TokenEvent::error(ErrorCode::StreamInterrupted, "stream cancelled by consumer");
    return std::move(result_);
  }

  [[nodiscard]] bool is_cancelled() const { return cancelled_; }

 private:
  bool deliver(const TokenEvent& event) {
    if (sink_ && !sink_(event)) cancelled_ = true;
    return !cancelled_;
  }

  const TokenSink& sink_;
  StreamResult result_;
  bool cancelled_ = false;
};

}  // namespace

std::string_view to_string(BackendKind kind) { return kind == BackendKind::stub ? "stub" : "remote"; }

std::string_view to_string(FinishReason reason) {
  return reason == FinishReason::stop ? "stop" : "length";
}

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "stub") return BackendKind::stub;
  if (name == "remote") return BackendKind::remote;
  throw Error(ErrorCode::InvalidArgument, "unknown backend '" + std::string(name) + "'");
}

void GenerationConfig::validate() const {
  if (max_new_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_new_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (!(repetition_penalty >= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "repetition_penalty must be >= 1");
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> StubBackend::source_tags(std::string_view prompt) {
  std::vector<std::string> tags;
  std::size_t pos = 0;
  while ((pos = prompt.find('[', pos)) != std::string_view::npos) {
    const auto close = prompt.find_first_of("[]\n", pos + 1);
    if (close == std::string_view::npos) break;
    if (prompt[close] != ']') {
      pos = close;
      continue;
    }
    const std::string_view inner = prompt.substr(pos + 1, close - pos - 1);
    const auto hash = inner.rfind('#');
    const bool is_tag = hash != std::string_view::npos && hash > 0 && hash + 1 < inner.size() &&
                        inner.find_first_not_of("0123456789", hash + 1) == std::string_view::npos;
    if (is_tag && std::find(tags.begin(), tags.end(), inner) == tags.end()) {
      tags.emplace_back(inner);
    }
    pos = close + 1;
  }
  return tags;
}

std::string StubBackend::answer_for(std::string_view prompt) {
  std::string cites;
  for (const auto& tag : source_tags(prompt)) {
    if (!cites.empty()) cites += ',';
    cites += tag;
  }
  return "STUB-ANSWER cites=[" + cites + "] prompt_chars=" + std::to_string(utf8::length(prompt));
}

StreamResult StubBackend::generate_stream(std::string_view prompt, const GenerationConfig& config,
                                          const TokenSink& sink) {
  if (prompt.empty()) throw Error(ErrorCode::InvalidArgument, "prompt is empty", Stage::generation);
  config.validate();

  const std::string answer = answer_for(prompt);
  StreamRecorder rec(sink);
  std::size_t emitted = 0;
  std::size_t start = 0;
  while (start < answer.size()) {
    if (emitted == config.max_new_tokens) return rec.finish(TokenEvent::done(FinishReason::length));
    // Each token after the first carries its leading space.
    auto end = answer.find(' ', start == 0 ? 0 : start + 1);
    if (end == std::string::npos) end = answer.size();
    if (!rec.token(answer.substr(start, end - start))) return rec.cancelled();
    ++emitted;
    start = end;
  }
  return rec.finish(TokenEvent::done(FinishReason::stop));
}

// ---------------------------------------------------------------------------

RemoteBackendConfig RemoteBackendConfig::from_env() {
  RemoteBackendConfig config;
  if (const char* url = std::getenv("MEDRAG_BACKEND_URL"); url && *url) config.base_url = url;
  return config;
}

RemoteBackend::RemoteBackend(RemoteBackendConfig config)
    : config_(std::move(config)),
      slots_(std::clamp<std::ptrdiff_t>(config_.max_concurrent_streams, 1, 1024)) {}

bool RemoteBackend::probe() {
  httplib::Client client(config_.base_url);
  auto [s, us] = split_timeout(config_.connect_timeout);
  client.set_connection_timeout(s, us);
  client.set_read_timeout(s, us);
  // Any HTTP answer means the server is up, even a 404 for /v1/models.
  return static_cast<bool>(client.Get("/v1/models"));
}

StreamResult RemoteBackend::generate_stream(std::string_view prompt, const GenerationConfig& config,
                                            const TokenSink& sink) {
  using nlohmann::json;
  if (prompt.empty()) throw Error(ErrorCode::InvalidArgument, "prompt is empty", Stage::generation);
  config.validate();

  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};

  const json body{{"model", config.model},
                  {"prompt", prompt},
                  {"max_tokens", config.max_new_tokens},
                  {"temperature", config.temperature},
                  {"repetition_penalty", config.repetition_penalty},
                  {"stream", true}};

  httplib::Client client(config_.base_url);
  {
    auto [s, us] = split_timeout(config_.connect_timeout);
    client.set_connection_timeout(s, us);
  }
  {
    auto [s, us] = split_timeout(config_.read_timeout);
    client.set_read_timeout(s, us);
  }

  StreamRecorder rec(sink);
  SseParser parser;
  int status = 0;
  std::string error_body;
  bool saw_done = false;
  std::optional<FinishReason> finish;
  std::optional<TokenEvent> protocol_error;

  auto handle = [&](const std::vector<SseEvent>& events) {
    for (const auto& ev : events) {
      if (saw_done || protocol_error) return;
      if (ev.data == "[DONE]") {
        saw_done = true;
        return;
      }
      try {
        const auto chunk = json::parse(ev.data);
        if (chunk.contains("error")) {
          protocol_error = TokenEvent::error(ErrorCode::BackendError, chunk["error"].dump());
          return;
        }
        const auto& choice = chunk.at("choices").at(0);
        if (auto it = choice.find("text"); it != choice.end() && it->is_string()) {
          auto text = it->get<std::string>();
          if (!text.empty() && !rec.token(std::move(text))) return;
        }
        if (auto it = choice.find("finish_reason"); it != choice.end() && it->is_string()) {
          finish = it->get<std::string>() == "length" ? FinishReason::length : FinishReason::stop;
        }
      } catch (const json::exception& e) {
        protocol_error =
            TokenEvent::error(ErrorCode::BackendError, std::string("malformed stream chunk: ") + e.what());
      }
    }
  };

  httplib::Request req;
  req.method = "POST";
  req.path = "/v1/completions";
  req.headers = {{"Accept", "text/event-stream"}};
  req.body = body.dump();
  req.set_header("Content-Type", "application/json");
  req.response_handler = [&](const httplib::Response& res) {
    status = res.status;
    return true;
  };
  req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
    if (status != 200) {
      error_body.append(data, len);
      return true;
    }
    handle(parser.feed(std::string_view(data, len)));
    return !rec.is_cancelled() && !protocol_error && !saw_done;
  };

  const auto result = client.send(req);
  if (rec.is_cancelled()) return rec.cancelled();
  if (protocol_error) return rec.finish(*protocol_error);

  if (status == 0) {
    return rec.finish(TokenEvent::error(
        ErrorCode::BackendUnavailable,
        "inference server unreachable at " + config_.base_url + ": " + httplib::to_string(result.error())));
  }
  if (status != 200) {
    return rec.finish(TokenEvent::error(
        ErrorCode::BackendError, "inference server returned " + std::to_string(status) + ": " + error_body));
  }

  const bool clean_end = result || saw_done;
  if (!saw_done && clean_end) handle(parser.finish());
  if (rec.is_cancelled()) return rec.cancelled();
  if (protocol_error) return rec.finish(*protocol_error);
  if (saw_done || (clean_end && finish)) {
    return rec.finish(TokenEvent::done(finish.value_or(FinishReason::stop)));
  }
  return rec.finish(TokenEvent::error(
      ErrorCode::StreamInterrupted,
      "stream ended before completion" +
          (result ? std::string() : std::string(" (") + httplib::to_string(result.error()) + ")")));
}

// ---------------------------------------------------------------------------

std::unique_ptr<GenerationBackend> make_backend(BackendKind kind, const RemoteBackendConfig& remote) {
  if (kind == BackendKind::stub) return std::make_unique<StubBackend>();
  return std::make_unique<RemoteBackend>(remote);
}

std::size_t count_approx_tokens(std::string_view text) {
  return (utf8::length(text) + 3) / 4;
}

}  // namespace medrag
