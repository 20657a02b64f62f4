#include "medrag/ingest.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "medrag/error.hpp"
#include "medrag/utf8.hpp"

namespace fs = std::filesystem;

namespace medrag {

void SplitterConfig::validate() const {
  if (chunk_size == 0) throw Error(ErrorCode::InvalidArgument, "chunk_size must be positive");
  if (chunk_overlap >= chunk_size) {
    throw Error(ErrorCode::InvalidArgument, "chunk_overlap must be smaller than chunk_size");
  }
  if (separators.empty() || !separators.back().empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "separators must be non-empty and end with the empty string");
  }
}

namespace {

std::string normalize_newlines(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < in.size() && in[i + 1] == '\n') ++i;
    } else {
      out.push_back(in[i]);
    }
  }
  return out;
}

std::string_view as_chars(std::span<const std::uint8_t> bytes) {
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

struct Span {
  std::size_t begin;
  std::size_t end;
  [[nodiscard]] std::size_t size() const { return end - begin; }
};

class RecursiveSplitter {
 public:
  RecursiveSplitter(const std::u32string& text, const SplitterConfig& config)
      : text_(text), config_(config) {
    separators_.reserve(config.separators.size());
    for (const auto& s : config.separators) {
      auto decoded = utf8::decode(s);
      if (!decoded) throw Error(ErrorCode::InvalidArgument, "separator is not valid UTF-8");
      separators_.push_back(std::move(*decoded));
    }
  }

  std::vector<Span> run() {
    split({0, text_.size()}, separators_);
    return std::move(out_);
  }

 private:
  bool contains(Span span, const std::u32string& sep) const {
    const auto first = text_.begin() + static_cast<std::ptrdiff_t>(span.begin);
    const auto last = text_.begin() + static_cast<std::ptrdiff_t>(span.end);
    return std::search(first, last, sep.begin(), sep.end()) != last;
  }

  // Pieces end just after each separator occurrence so they tile the span.
  std::vector<Span> pieces(Span span, const std::u32string& sep) const {
    std::vector<Span> result;
    if (sep.empty()) {
      result.reserve(span.size());
      for (std::size_t i = span.begin; i < span.end; ++i) result.push_back({i, i + 1});
      return result;
    }
    std::size_t start = span.begin;
    std::size_t pos = span.begin;
    while (pos < span.end) {
      const auto hit = text_.find(sep, pos);
      if (hit == std::u32string::npos || hit + sep.size() > span.end) break;
      result.push_back({start, hit + sep.size()});
      start = pos = hit + sep.size();
    }
    if (start < span.end) result.push_back({start, span.end});
    return result;
  }

  void split(Span span, std::span<const std::u32string> seps) {
    std::size_t chosen = seps.size() - 1;
    for (std::size_t i = 0; i < seps.size(); ++i) {
      if (seps[i].empty() || contains(span, seps[i])) {
        chosen = i;
        break;
      }
    }
    const auto rest = seps.subspan(chosen + 1);

    std::vector<Span> fitting;
    for (const Span piece : pieces(span, seps[chosen])) {
      if (piece.size() <= config_.chunk_size) {
        fitting.push_back(piece);
        continue;
      }
      merge(fitting);
      fitting.clear();
      split(piece, rest);
    }
    merge(fitting);
  }

  void merge(std::span<const Span> fitting) {
    std::deque<Span> window;
    std::size_t total = 0;
    for (const Span piece : fitting) {
      const std::size_t len = piece.size();
      if (!window.empty() && total + len > config_.chunk_size) {
        emit({window.front().begin, window.back().end});
        while (!window.empty() &&
               (total > config_.chunk_overlap || total + len > config_.chunk_size)) {
          total -= window.front().size();
          window.pop_front();
        }
      }
      window.push_back(piece);
      total += len;
    }
    if (!window.empty()) emit({window.front().begin, window.back().end});
  }

  void emit(Span span) {
    while (span.begin < span.end && utf8::is_space(text_[span.begin])) ++span.begin;
    while (span.end > span.begin && utf8::is_space(text_[span.end - 1])) --span.end;
    if (span.begin < span.end) out_.push_back(span);
  }

  const std::u32string& text_;
  const SplitterConfig& config_;
  std::vector<std::u32string> separators_;
  std::vector<Span> out_;
};

}  // namespace

std::string extract_text(std::span<const std::uint8_t> raw, MediaKind kind,
                         const PdfExtractor& pdf_extractor) {
  if (kind == MediaKind::pdf_extracted) {
    if (!pdf_extractor) {
      throw Error(ErrorCode::ExtractionFailed, "no PDF extractor configured", Stage::ingest);
    }
    std::string joined;
    for (const auto& page : pdf_extractor(raw)) {
      if (!joined.empty()) joined += "\n\n";
      joined += normalize_newlines(page);
    }
    if (!utf8::decode(joined)) {
      throw Error(ErrorCode::ExtractionFailed, "PDF extractor produced invalid UTF-8",
                  Stage::ingest);
    }
    return joined;
  }

  std::string_view bytes = as_chars(raw);
  if (bytes.starts_with("\xEF\xBB\xBF")) bytes.remove_prefix(3);
  if (!utf8::decode(bytes)) {
    throw Error(ErrorCode::ExtractionFailed, "text is not valid UTF-8", Stage::ingest);
  }
  return normalize_newlines(bytes);
}

LoadReport load_directory(const fs::path& root, const LoadOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::PathNotFound, "corpus directory not found: " + root.string(),
                Stage::ingest);
  }

  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    files.emplace_back(fs::relative(entry.path(), root).generic_string(), entry.path());
  }
  std::sort(files.begin(), files.end());

  LoadReport report;
  for (const auto& [doc_id, path] : files) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });

    MediaKind kind;
    if (ext == ".txt" || ext == ".md") {
      kind = MediaKind::plain_text;
    } else if (ext == ".pdf" && options.pdf_extractor) {
      kind = MediaKind::pdf_extracted;
    } else {
      spdlog::info("skipping unsupported file {}", doc_id);
      report.skipped.push_back(doc_id);
      continue;
    }

    std::ifstream in(path, std::ios::binary);
    std::vector<std::uint8_t> raw{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
    if (!in && !in.eof()) {
      report.failures.push_back({doc_id, "read error"});
      continue;
    }
    try {
      Document doc;
      doc.doc_id = doc_id;
      doc.text = extract_text(raw, kind, options.pdf_extractor);
      doc.source_path = path.string();
      doc.byte_size = raw.size();
      doc.media_kind = kind;
      report.documents.push_back(std::move(doc));
    } catch (const Error& e) {
      spdlog::warn("extraction failed for {}: {}", doc_id, e.what());
      report.failures.push_back({doc_id, e.what()});
    }
  }

  if (report.documents.empty()) {
    throw Error(ErrorCode::EmptyCorpus, "no documents loaded from " + root.string(),
                Stage::ingest);
  }
  return report;
}

std::vector<TextSpan> split_text(std::string_view text, const SplitterConfig& config) {
  config.validate();
  const auto decoded = utf8::decode(text);
  if (!decoded) throw Error(ErrorCode::InvalidArgument, "text is not valid UTF-8");

  std::vector<TextSpan> spans;
  for (const auto& span : RecursiveSplitter(*decoded, config).run()) {
    spans.push_back({span.begin, span.end,
                     utf8::encode(std::u32string_view(*decoded).substr(span.begin, span.size()))});
  }
  return spans;
}

std::vector<Chunk> chunk_document(const Document& doc, const SplitterConfig& config) {
  std::vector<Chunk> chunks;
  std::size_t seq = 0;
  for (auto& span : split_text(doc.text, config)) {
    Chunk chunk;
    chunk.chunk_id = doc.doc_id + "#" + std::to_string(seq);
    chunk.doc_id = doc.doc_id;
    chunk.seq = seq++;
    chunk.text = std::move(span.text);
    chunk.char_start = span.char_start;
    chunk.char_end = span.char_end;
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

void write_chunk_dump(const fs::path& path, std::span<const Chunk> chunks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write chunk dump: " + path.string());
  for (const auto& c : chunks) {
    out << nlohmann::json{{"chunk_id", c.chunk_id},
                          {"char_start", c.char_start},
                          {"char_end", c.char_end},
                          {"text", c.text}}
               .dump()
        << '\n';
  }
}

}  // namespace medrag
