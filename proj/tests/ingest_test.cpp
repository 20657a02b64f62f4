#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "medrag/error.hpp"
#include "medrag/ingest.hpp"
#include "medrag/pdf.hpp"
#include "support/harness.hpp"
#include "support/invariants.hpp"
#include "support/oracles.hpp"

using namespace medrag;
using medrag::testing::TempDir;

namespace {

void write(const std::filesystem::path& p, std::string_view contents) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << contents;
}

std::vector<std::uint8_t> bytes(std::string_view s) { return {s.begin(), s.end()}; }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected medrag::Error";
  return ErrorCode::InvalidArgument;
}

SplitterConfig config(std::size_t size, std::size_t overlap) {
  SplitterConfig c;
  c.chunk_size = size;
  c.chunk_overlap = overlap;
  return c;
}

}  // namespace

TEST(ExtractText, PlainTextIdentity) { EXPECT_EQ(extract_text(bytes("abc"), MediaKind::plain_text), "abc"); }

TEST(ExtractText, NormalizesLineEndings) {
  EXPECT_EQ(extract_text(bytes("a\r\nb"), MediaKind::plain_text), "a\nb");
  EXPECT_EQ(extract_text(bytes("a\rb\r\n\r\nc"), MediaKind::plain_text), "a\nb\n\nc");
}

TEST(ExtractText, DropsByteOrderMark) {
  EXPECT_EQ(extract_text(bytes("\xEF\xBB\xBFhi"), MediaKind::plain_text), "hi");
}

TEST(ExtractText, RejectsInvalidUtf8) {
  EXPECT_EQ(code_of([] { (void)extract_text(bytes("ok\xFF"), MediaKind::plain_text); }),
            ErrorCode::ExtractionFailed);
}

TEST(ExtractText, PdfWithoutExtractorFails) {
  EXPECT_EQ(code_of([] { (void)extract_text(bytes("%PDF-1.4"), MediaKind::pdf_extracted); }),
            ErrorCode::ExtractionFailed);
}

TEST(ExtractText, PdfPagesJoinedWithBlankLine) {
  PdfExtractor fake = [](std::span<const std::uint8_t>) {
    return std::vector<std::string>{"page one\r\nline", "page two"};
  };
  EXPECT_EQ(extract_text(bytes("x"), MediaKind::pdf_extracted, fake), "page one\nline\n\npage two");
}

TEST(LoadDirectory, MissingDirectory) {
  EXPECT_EQ(code_of([] { (void)load_directory("/nonexistent/medrag/corpus"); }), ErrorCode::PathNotFound);
}

TEST(LoadDirectory, EmptyDirectoryIsEmptyCorpus) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { (void)load_directory(dir.path()); }), ErrorCode::EmptyCorpus);
}

TEST(LoadDirectory, SingleFile) {
  TempDir dir;
  write(dir.path() / "a.txt", "hello");
  const auto report = load_directory(dir.path());
  ASSERT_EQ(report.documents.size(), 1u);
  EXPECT_EQ(report.documents[0].doc_id, "a.txt");
  EXPECT_EQ(report.documents[0].text, "hello");
  EXPECT_EQ(report.documents[0].byte_size, 5u);
  EXPECT_EQ(report.documents[0].media_kind, MediaKind::plain_text);
}

TEST(LoadDirectory, FixtureCorpusInLexicographicOrder) {
  const auto root = medrag::testing::fixture_path("corpus");
  std::vector<std::string> expected;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    expected.push_back(e.path().filename().string());
  }
  std::sort(expected.begin(), expected.end());

  const auto report = load_directory(root);
  std::vector<std::string> ids;
  for (const auto& d : report.documents) ids.push_back(d.doc_id);
  EXPECT_EQ(ids, expected);
  EXPECT_EQ(ids.size(), 3u);
}

TEST(LoadDirectory, SkipsUnsupportedAndCollectsFailures) {
  TempDir dir;
  write(dir.path() / "b.md", "# notes");
  write(dir.path() / "bad.txt", "broken \xFF bytes");
  write(dir.path() / "image.png", "\x89PNG");
  write(dir.path() / "scan.pdf", "%PDF-1.4");
  write(dir.path() / "sub" / "c.TXT", "nested\r\n");

  const auto report = load_directory(dir.path());
  ASSERT_EQ(report.documents.size(), 2u);
  EXPECT_EQ(report.documents[0].doc_id, "b.md");
  EXPECT_EQ(report.documents[1].doc_id, "sub/c.TXT");
  EXPECT_EQ(report.documents[1].text, "nested\n");
  ASSERT_EQ(report.failures.size(), 1u);
  EXPECT_EQ(report.failures[0].doc_id, "bad.txt");
  EXPECT_EQ(report.skipped, (std::vector<std::string>{"image.png", "scan.pdf"}));
}

TEST(LoadDirectory, PdfLoadedWhenExtractorConfigured) {
  TempDir dir;
  std::filesystem::copy(medrag::testing::fixture_path("pdf/single_page.pdf"), dir.path() / "p.pdf");
  LoadOptions options;
  options.pdf_extractor = basic_pdf_extractor();
  const auto report = load_directory(dir.path(), options);
  ASSERT_EQ(report.documents.size(), 1u);
  EXPECT_EQ(report.documents[0].media_kind, MediaKind::pdf_extracted);
  EXPECT_NE(report.documents[0].text.find("dyspepsia test page"), std::string::npos);
}

TEST(SplitterConfig, Validation) {
  EXPECT_NO_THROW(SplitterConfig{}.validate());
  EXPECT_EQ(code_of([] { config(10, 10).validate(); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { config(0, 0).validate(); }), ErrorCode::InvalidArgument);
  auto no_terminal = config(10, 0);
  no_terminal.separators = {"\n", " "};
  EXPECT_EQ(code_of([&] { no_terminal.validate(); }), ErrorCode::InvalidArgument);
  no_terminal.separators.clear();
  EXPECT_EQ(code_of([&] { no_terminal.validate(); }), ErrorCode::InvalidArgument);
}

TEST(SplitText, EmptyAndBlankInput) {
  EXPECT_TRUE(split_text("", SplitterConfig{}).empty());
  EXPECT_TRUE(split_text(" \n\n\t ", SplitterConfig{}).empty());
}

TEST(SplitText, FixedWindowsOnUnbrokenText) {
  const std::string text(2048, 'a');
  const auto spans = split_text(text, config(1024, 0));
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].char_start, 0u);
  EXPECT_EQ(spans[0].char_end, 1024u);
  EXPECT_EQ(spans[1].char_start, 1024u);
  EXPECT_EQ(spans[1].char_end, 2048u);
}

TEST(SplitText, FixedWindowsWithOverlap) {
  // Fixed-window reference: stride chunk_size - overlap for a separator-free run.
  const std::string text(250, 'b');
  const auto spans = split_text(text, config(100, 20));
  std::vector<std::pair<std::size_t, std::size_t>> got;
  for (const auto& s : spans) got.emplace_back(s.char_start, s.char_end);
  const std::vector<std::pair<std::size_t, std::size_t>> expected{{0, 100}, {80, 180}, {160, 250}};
  EXPECT_EQ(got, expected);
}

TEST(SplitText, SmallParagraphsStayTogether) {
  const std::string text = "P1 aaaaaaa\n\nP2 bbbbbbb";
  const auto spans = split_text(text, SplitterConfig{});
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].text, text);
  EXPECT_EQ(spans[0].char_start, 0u);
  EXPECT_EQ(spans[0].char_end, text.size());
}

TEST(SplitText, PrefersParagraphBoundaries) {
  const std::string p1(60, 'x'), p2(60, 'y');
  const auto spans = split_text(p1 + "\n\n" + p2, config(100, 0));
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].text, p1);
  EXPECT_EQ(spans[1].text, p2);
  EXPECT_EQ(spans[1].char_start, 62u);
}

TEST(SplitText, OffsetsCountCodePoints) {
  const std::string text = "胃痛 胃痛 胃痛";
  const auto spans = split_text(text, config(5, 0));
  // Pieces "胃痛 ", "胃痛 ", "胃痛" (3, 3, 2 code points): the first two do not fit together.
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].text, "胃痛");
  EXPECT_EQ(spans[0].char_end, 2u);
  EXPECT_EQ(spans[1].text, "胃痛 胃痛");
  EXPECT_EQ(spans[1].char_start, 3u);
  EXPECT_EQ(spans[1].char_end, 8u);
}

TEST(SplitText, MatchesReferenceSplitterOnRandomDocuments) {
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 150; ++i) {
    const std::size_t size = 20 + rng() % 300;
    const std::size_t overlap = rng() % size;
    const auto doc = medrag::testing::random_document(rng, 6000);
    const medrag::testing::ReferenceSplitter oracle(size, overlap, medrag::testing::default_separators());
    const auto expected = oracle.split(doc);
    const auto spans = split_text(utf8::encode(doc), config(size, overlap));
    ASSERT_EQ(spans.size(), expected.size()) << "doc " << i;
    for (std::size_t j = 0; j < spans.size(); ++j) {
      ASSERT_EQ(spans[j].text, utf8::encode(expected[j])) << "doc " << i << " chunk " << j;
    }
  }
}

TEST(SplitText, InvariantsHoldOnRandomDocuments) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const std::size_t size = 16 + rng() % 1100;
    const auto c = config(size, rng() % size);
    const auto doc = medrag::testing::random_document(rng, 8000);
    const auto spans = split_text(utf8::encode(doc), c);
    ASSERT_EQ(medrag::testing::check_split_invariants(doc, spans, c), "") << "doc " << i;
    ASSERT_EQ(split_text(utf8::encode(doc), c), spans);
  }
}

TEST(SplitText, UnicodeWhitespaceIsNotCoveredContent) {
  const std::string text = "alpha\u00a0beta\u3000\u3000gamma";
  const auto doc = *utf8::decode(text);
  const auto c = config(6, 0);
  EXPECT_EQ(medrag::testing::check_split_invariants(doc, split_text(text, c), c), "");
}

TEST(SplitText, FixtureCorpusChunkCountMatchesOracle) {
  const auto report = load_directory(medrag::testing::fixture_path("corpus"));
  const medrag::testing::ReferenceSplitter oracle(1024, 64, medrag::testing::default_separators());
  std::size_t expected = 0, actual = 0;
  for (const auto& d : report.documents) {
    expected += oracle.split(*utf8::decode(d.text)).size();
    actual += chunk_document(d, SplitterConfig{}).size();
  }
  EXPECT_EQ(actual, expected);
  EXPECT_EQ(actual, 5u);
}

TEST(ChunkDocument, IdsAndSequence) {
  Document doc{"notes/a.txt", std::string(30, 'z'), "/tmp/a.txt", 30, MediaKind::plain_text};
  const auto chunks = chunk_document(doc, config(10, 0));
  ASSERT_EQ(chunks.size(), 3u);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    EXPECT_EQ(chunks[i].seq, i);
    EXPECT_EQ(chunks[i].chunk_id, "notes/a.txt#" + std::to_string(i));
    EXPECT_EQ(chunks[i].doc_id, "notes/a.txt");
  }
}

TEST(ChunkDump, OneJsonRecordPerLine) {
  TempDir dir;
  Document doc{"a.txt", "alpha beta\n\ngamma", "", 0, MediaKind::plain_text};
  const auto chunks = chunk_document(doc, config(8, 0));
  write_chunk_dump(dir.path() / "dump.jsonl", chunks);
  std::ifstream in(dir.path() / "dump.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("chunk_id"), chunks[n].chunk_id);
    EXPECT_EQ(j.at("char_start"), chunks[n].char_start);
    EXPECT_EQ(j.at("char_end"), chunks[n].char_end);
    EXPECT_EQ(j.at("text"), chunks[n].text);
    ++n;
  }
  EXPECT_EQ(n, chunks.size());
}
