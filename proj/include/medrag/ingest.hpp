#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace medrag {

enum class MediaKind { plain_text, pdf_extracted };

struct Document {
  std::string doc_id;       // path relative to the corpus root, '/'-separated
  std::string text;         // UTF-8, line feeds only
  std::string source_path;
  std::uint64_t byte_size = 0;
  MediaKind media_kind = MediaKind::plain_text;
};

/// A contiguous span of a document. Offsets count Unicode code points.
struct Chunk {
  std::string chunk_id;  // "{doc_id}#{seq}"
  std::string doc_id;
  std::size_t seq = 0;
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;

  bool operator==(const Chunk&) const = default;
};

struct TextSpan {
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string text;

  bool operator==(const TextSpan&) const = default;
};

struct SplitterConfig {
  std::size_t chunk_size = 1024;
  std::size_t chunk_overlap = 64;
  std::vector<std::string> separators{"\n\n", "\n", " ", ""};

  /// Throws Error(InvalidArgument) when the invariants do not hold.
  void validate() const;
};

/// Returns the text of each page. Throws Error(ExtractionFailed) on bad input.
using PdfExtractor = std::function<std::vector<std::string>(std::span<const std::uint8_t>)>;

struct LoadOptions {
  /// Empty means PDFs are skipped.
  PdfExtractor pdf_extractor;
};

struct LoadFailure {
  std::string doc_id;
  std::string message;
};

struct LoadReport {
  std::vector<Document> documents;
  std::vector<LoadFailure> failures;
  std::vector<std::string> skipped;
};

/// Decodes raw file bytes to normalized text: CRLF and lone CR become LF,
/// a leading byte-order mark is dropped, PDF pages are joined by a blank line.
std::string extract_text(std::span<const std::uint8_t> raw, MediaKind kind,
                         const PdfExtractor& pdf_extractor = {});

/// Loads every supported file under `root` (recursively) in lexicographic
/// doc_id order. Per-file failures are collected, not thrown.
LoadReport load_directory(const std::filesystem::path& root, const LoadOptions& options = {});

/// Recursive character splitting. Empty or all-whitespace input yields no spans.
std::vector<TextSpan> split_text(std::string_view text, const SplitterConfig& config);

std::vector<Chunk> chunk_document(const Document& doc, const SplitterConfig& config);

/// One JSON object per line: chunk_id, char_start, char_end, text.
void write_chunk_dump(const std::filesystem::path& path, std::span<const Chunk> chunks);

}  // namespace medrag
