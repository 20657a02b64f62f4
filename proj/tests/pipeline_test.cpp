#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "medrag/error.hpp"
#include "medrag/pipeline.hpp"
#include "support/harness.hpp"

using namespace medrag;
using medrag::testing::TempDir;

namespace {

void write(const std::filesystem::path& p, std::string_view contents) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << contents;
}

/// Emits a few tokens, then fails.
class FailingBackend final : public GenerationBackend {
 public:
  [[nodiscard]] BackendKind kind() const override { return BackendKind::remote; }
  bool probe() override { return false; }
  StreamResult generate_stream(std::string_view, const GenerationConfig&, const TokenSink& sink) override {
    StreamResult r;
    for (const char* t : {"Partial", " answer"}) {
      r.text += t;
      sink(TokenEvent::token(t));
    }
    r.terminal = TokenEvent::error(ErrorCode::StreamInterrupted, "connection reset");
    sink(r.terminal);
    return r;
  }
};

/// Blocks inside the corpus loader until released.
class Gate {
 public:
  void wait() {
    std::unique_lock lock(m_);
    entered_ = true;
    cv_.notify_all();
    cv_.wait(lock, [this] { return open_; });
  }
  void wait_entered() {
    std::unique_lock lock(m_);
    cv_.wait(lock, [this] { return entered_; });
  }
  void open() {
    std::lock_guard lock(m_);
    open_ = true;
    cv_.notify_all();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  bool entered_ = false, open_ = false;
};

}  // namespace

TEST(Engine, OneDocumentCorpusCitesTopHit) {
  TempDir corpus;
  write(corpus.path() / "only.txt", "Helicobacter pylori infection can cause peptic ulcers.");
  auto engine = medrag::testing::stub_engine();
  const auto report = engine->ingest(corpus.path());
  EXPECT_EQ(report.documents, 1u);
  EXPECT_EQ(report.chunks, 1u);
  EXPECT_EQ(report.collection, "medrag");

  const Answer a = engine->answer("What causes peptic ulcers?");
  ASSERT_EQ(a.citations.size(), 1u);
  EXPECT_EQ(a.citations[0].chunk_id, "only.txt#0");
  EXPECT_EQ(a.citations[0].char_start, 0u);
  EXPECT_EQ(a.citations[0].char_end, 54u);
  EXPECT_NE(a.text.find("cites=[only.txt#0]"), std::string::npos);
  EXPECT_EQ(a.finish_reason, FinishReason::stop);
  EXPECT_FALSE(a.truncated);
}

TEST(Engine, EmptyCollectionAnswersWithoutContext) {
  auto engine = medrag::testing::stub_engine();
  const Answer a = engine->answer("anything?");
  EXPECT_TRUE(a.citations.empty());
  EXPECT_EQ(a.text.rfind("STUB-ANSWER cites=[] prompt_chars=", 0), 0u);
}

TEST(Engine, FixtureCorpusDyspepsia) {
  auto engine = medrag::testing::stub_engine();
  const auto report = engine->ingest(medrag::testing::fixture_path("corpus"));
  EXPECT_EQ(report.documents, 3u);
  EXPECT_EQ(report.chunks, 5u);
  EXPECT_EQ(engine->collection().size(), 5u);

  std::vector<std::string> tokens;
  std::vector<Citation> meta;
  AnswerObserver observer;
  observer.on_context = [&](const PromptBundle& bundle, const std::vector<Citation>& citations) {
    EXPECT_TRUE(tokens.empty());
    EXPECT_EQ(bundle.included_chunk_ids.size(), citations.size());
    meta = citations;
  };
  observer.on_token = [&](const TokenEvent& e) {
    tokens.push_back(e.text);
    return true;
  };
  const Answer a = engine->answer("What may cause dyspepsia?", {}, observer);
  ASSERT_FALSE(a.citations.empty());
  EXPECT_EQ(a.citations[0].chunk_id, "gastroenterology.md#0");
  EXPECT_EQ(meta, a.citations);
  EXPECT_NE(a.text.find("gastroenterology.md#0"), std::string::npos);
  std::string joined;
  for (const auto& t : tokens) joined += t;
  EXPECT_EQ(joined, a.text);
  for (std::size_t i = 1; i < a.citations.size(); ++i) EXPECT_GE(a.citations[i - 1].score, a.citations[i].score);
}

TEST(Engine, QueryOptionsOverrideConfig) {
  auto engine = medrag::testing::stub_engine();
  engine->ingest(medrag::testing::fixture_path("corpus"));
  QueryOptions options;
  options.top_k = 2;
  options.max_new_tokens = 1;
  const Answer a = engine->answer("What may cause dyspepsia?", options);
  EXPECT_EQ(a.citations.size(), 2u);
  EXPECT_EQ(a.text, "STUB-ANSWER");
  EXPECT_EQ(a.finish_reason, FinishReason::length);
}

TEST(Engine, BlankQuestion) {
  auto engine = medrag::testing::stub_engine();
  try {
    engine->answer(" \n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyQuestion);
    EXPECT_EQ(e.stage(), Stage::prompt);
  }
}

TEST(Engine, GenerationFailureCarriesStageAndPartial) {
  auto engine = medrag::testing::stub_engine({}, std::make_shared<FailingBackend>());
  std::string streamed;
  AnswerObserver observer;
  observer.on_token = [&](const TokenEvent& e) {
    streamed += e.text;
    return true;
  };
  try {
    engine->answer("q?", {}, observer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StreamInterrupted);
    EXPECT_EQ(e.stage(), Stage::generation);
    EXPECT_EQ(e.partial(), "Partial answer");
    EXPECT_EQ(streamed, "Partial answer");
  }
}

TEST(Engine, IngestErrors) {
  auto engine = medrag::testing::stub_engine();
  TempDir empty;
  try {
    engine->ingest(empty.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
  }
  try {
    engine->ingest("/nonexistent/medrag");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PathNotFound);
  }
}

TEST(Engine, BlankDocumentsAreReportedNotFatal) {
  TempDir corpus;
  write(corpus.path() / "a.txt", "real content here");
  write(corpus.path() / "b.txt", "   \n\n  ");
  auto engine = medrag::testing::stub_engine();
  const auto report = engine->ingest(corpus.path());
  EXPECT_EQ(report.documents, 2u);
  EXPECT_EQ(report.chunks, 1u);
}

TEST(Engine, ReingestReplacesDocumentChunks) {
  TempDir corpus;
  write(corpus.path() / "a.txt", std::string(1500, 'x') + "\n\n" + std::string(1500, 'y'));
  auto engine = medrag::testing::stub_engine();
  engine->ingest(corpus.path());
  const auto before = engine->collection().size();
  write(corpus.path() / "a.txt", "short now");
  engine->ingest(corpus.path());
  EXPECT_GT(before, 1u);
  EXPECT_EQ(engine->collection().size(), 1u);
}

TEST(Engine, PersistsAndReopens) {
  TempDir index;
  {
    auto engine = medrag::testing::stub_engine(index.path());
    engine->ingest(medrag::testing::fixture_path("corpus"));
  }
  EXPECT_TRUE(std::filesystem::exists(index.path() / "medrag" / "manifest"));
  auto reopened = medrag::testing::stub_engine(index.path());
  EXPECT_EQ(reopened->collection().size(), 5u);
  EXPECT_EQ(reopened->answer("What may cause dyspepsia?").citations[0].chunk_id, "gastroenterology.md#0");
}

TEST(Engine, EmbedderMismatchOnOpen) {
  TempDir index;
  medrag::testing::stub_engine(index.path())->ingest(medrag::testing::fixture_path("corpus"));
  EngineConfig config;
  config.index_dir = index.path();
  try {
    Engine engine(config, std::make_shared<HashEmbedder>(128), std::make_shared<StubBackend>());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmbedderMismatch);
  }
}

TEST(Engine, ConcurrentIngestIsRejected) {
  auto engine = medrag::testing::stub_engine();
  Gate gate;
  LoadOptions slow;
  slow.pdf_extractor = [&](std::span<const std::uint8_t>) {
    gate.wait();
    return std::vector<std::string>{"pdf text"};
  };
  TempDir corpus;
  write(corpus.path() / "a.pdf", "%PDF");
  std::thread first([&] { engine->ingest(corpus.path(), slow); });
  gate.wait_entered();
  try {
    engine->ingest(medrag::testing::fixture_path("corpus"));
    ADD_FAILURE() << "second ingest was accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IngestInProgress);
  }
  gate.open();
  first.join();
  EXPECT_EQ(engine->collection().size(), 1u);
}

TEST(AnswerPayload, Json) {
  Answer a;
  a.text = "t";
  a.citations.push_back({"a#0", "a", 0.5, 1, 9});
  a.truncated = true;
  const auto j = to_json(a);
  EXPECT_EQ(j.at("answer"), "t");
  EXPECT_EQ(j.at("truncated"), true);
  EXPECT_EQ(j.at("citations").at(0).at("chunk_id"), "a#0");
  EXPECT_EQ(j.at("citations").at(0).at("char_end"), 9);
  EXPECT_TRUE(j.at("timing_ms").contains("embed"));
  EXPECT_TRUE(j.at("timing_ms").contains("search"));
  EXPECT_TRUE(j.at("timing_ms").contains("generate"));
}
