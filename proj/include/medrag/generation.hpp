#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "medrag/error.hpp"

namespace medrag {

enum class BackendKind { stub, remote };
enum class FinishReason { stop, length };

std::string_view to_string(BackendKind kind);
std::string_view to_string(FinishReason reason);
BackendKind parse_backend_kind(std::string_view name);

struct GenerationConfig {
  std::size_t max_new_tokens = 1024;
  double temperature = 0.7;
  double repetition_penalty = 1.1;
  std::string model = "TheBloke/Llama-2-13B";
  BackendKind backend = BackendKind::stub;

  void validate() const;
};

struct TokenEvent {
  enum class Kind { token, done, error };

  Kind kind = Kind::token;
  std::string text;                                  // token
  FinishReason finish_reason = FinishReason::stop;   // done
  ErrorCode error_code = ErrorCode::BackendError;    // error
  std::string message;                               // error

  static TokenEvent token(std::string text) {
    TokenEvent e;
    e.text = std::move(text);
    return e;
  }
  static TokenEvent done(FinishReason reason) {
    TokenEvent e;
    e.kind = Kind::done;
    e.finish_reason = reason;
    return e;
  }
  static TokenEvent error(ErrorCode code, std::string message) {
    return {Kind::error, {}, FinishReason::stop, code, std::move(message)};
  }

  bool operator==(const TokenEvent&) const = default;
};

/// Receives every event in order, terminal one included. Returning false
/// cancels the stream.
using TokenSink = std::function<bool(const TokenEvent&)>;

struct StreamResult {
  std::string text;     // concatenated token fragments
  TokenEvent terminal;  // done or error

  [[nodiscard]] bool ok() const { return terminal.kind == TokenEvent::Kind::done; }
};

/// Streams (token)* (done | error). Backend failures are reported as the
/// terminal error event, never thrown; an empty prompt throws InvalidArgument.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;

  [[nodiscard]] virtual BackendKind kind() const = 0;
  virtual bool probe() = 0;
  virtual StreamResult generate_stream(std::string_view prompt, const GenerationConfig& config,
                                       const TokenSink& sink) = 0;
};

/// Offline backend. Answers "STUB-ANSWER cites=[t1,t2] prompt_chars=N" where
/// t_i are the distinct [doc_id#seq] tags of the prompt in first-seen order
/// and N the prompt length in code points, one token per word.
class StubBackend final : public GenerationBackend {
 public:
  [[nodiscard]] BackendKind kind() const override { return BackendKind::stub; }
  bool probe() override { return true; }
  StreamResult generate_stream(std::string_view prompt, const GenerationConfig& config,
                               const TokenSink& sink) override;

  static std::string answer_for(std::string_view prompt);
  static std::vector<std::string> source_tags(std::string_view prompt);
};

struct RemoteBackendConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{120000};
  std::ptrdiff_t max_concurrent_streams = 4;

  /// Defaults overridden by MEDRAG_BACKEND_URL when set.
  static RemoteBackendConfig from_env();
};

/// Client for the completions-over-HTTP streaming protocol:
/// POST {base_url}/v1/completions with "stream": true, answered by
/// "data: {json}" events and a final "data: [DONE]".
class RemoteBackend final : public GenerationBackend {
 public:
  explicit RemoteBackend(RemoteBackendConfig config);

  [[nodiscard]] BackendKind kind() const override { return BackendKind::remote; }
  bool probe() override;
  StreamResult generate_stream(std::string_view prompt, const GenerationConfig& config,
                               const TokenSink& sink) override;

 private:
  RemoteBackendConfig config_;
  std::counting_semaphore<1024> slots_;
};

std::unique_ptr<GenerationBackend> make_backend(BackendKind kind,
                                                const RemoteBackendConfig& remote = {});

/// ceil(code points / 4). A rough budget figure, not a tokenizer.
std::size_t count_approx_tokens(std::string_view text);

}  // namespace medrag
