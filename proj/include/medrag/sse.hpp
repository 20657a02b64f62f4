#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medrag {

struct SseEvent {
  std::string event;  // empty when the stream did not name it
  std::string data;   // data lines joined with '\n'

  bool operator==(const SseEvent&) const = default;
};

/// Incremental text/event-stream parser. Bytes may arrive split anywhere,
/// including inside a CRLF pair.
class SseParser {
 public:
  std::vector<SseEvent> feed(std::string_view bytes);

  /// Flushes a trailing event that was not closed by a blank line.
  std::vector<SseEvent> finish();

 private:
  void line(std::string_view text, std::vector<SseEvent>& out);
  void dispatch(std::vector<SseEvent>& out);

  std::string buffer_;
  bool pending_cr_ = false;
  SseEvent current_;
  bool has_data_ = false;
};

/// Serializes one event; multi-line data becomes several data: lines.
std::string format_sse(std::string_view event, std::string_view data);

}  // namespace medrag
