#include <gtest/gtest.h>

#include <set>

#include "medrag/embedding.hpp"
#include "medrag/error.hpp"
#include "medrag/ingest.hpp"
#include "support/harness.hpp"

using namespace medrag;

namespace {

bool bit_equal(const EmbeddingVector& a, const EmbeddingVector& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
}

std::vector<std::string> fixture_chunks() {
  std::vector<std::string> texts;
  const auto report = load_directory(medrag::testing::fixture_path("corpus"));
  for (const auto& d : report.documents) {
    for (const auto& c : chunk_document(d, {.chunk_size = 80, .chunk_overlap = 10})) texts.push_back(c.text);
  }
  return texts;
}

/// Serves /v1/embeddings with vectors of `dim` derived from the input index.
class MockEmbeddingServer {
 public:
  explicit MockEmbeddingServer(int dim) {
    server_.Post("/v1/embeddings", [this, dim](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      ++calls_;
      auto data = nlohmann::json::array();
      const auto n = body.at("input").size();
      for (std::size_t i = n; i-- > 0;) {
        std::vector<float> v(static_cast<std::size_t>(dim), 0.0f);
        v[i % v.size()] = 2.0f;
        data.push_back({{"index", i}, {"embedding", v}});
      }
      res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockEmbeddingServer() {
    server_.stop();
    thread_.join();
  }
  [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  [[nodiscard]] int calls() const { return calls_; }

 private:
  httplib::Server server_;
  std::atomic<int> calls_{0};
  int port_ = -1;
  std::thread thread_;
};

}  // namespace

TEST(HashEmbedder, SpecAndId) {
  const HashEmbedder e;
  EXPECT_EQ(e.spec().embedder_id, "hash-v1/384");
  EXPECT_EQ(e.spec().dim, 384);
  EXPECT_EQ(HashEmbedder(64).spec().embedder_id, "hash-v1/64");
}

TEST(HashEmbedder, Deterministic) {
  const HashEmbedder e;
  EXPECT_TRUE(bit_equal(e.embed("abc"), e.embed("abc")));
  EXPECT_TRUE(bit_equal(HashEmbedder().embed("abc"), e.embed("abc")));
}

TEST(HashEmbedder, CaseInsensitive) {
  const HashEmbedder e;
  EXPECT_TRUE(bit_equal(e.embed("Cardiac Arrest"), e.embed("cardiac arrest")));
}

TEST(HashEmbedder, UnitNormForFixtureStrings) {
  const HashEmbedder e;
  for (const auto& t : fixture_chunks()) {
    const auto v = e.embed(t);
    EXPECT_EQ(v.size(), 384);
    EXPECT_TRUE(is_unit_norm(v)) << t;
  }
  for (const char* t : {"a", "ab", "abc", "  x ", "胃", "aaaaaaaa"}) EXPECT_TRUE(is_unit_norm(e.embed(t))) << t;
}

TEST(HashEmbedder, ParaphraseCloserThanUnrelated) {
  const HashEmbedder e;
  const auto q = e.embed("cardiac arrest symptoms");
  EXPECT_GT(cosine(q, e.embed("symptoms of cardiac arrest")), cosine(q, e.embed("software license agreement")));
}

TEST(HashEmbedder, DistinctStringsDistinctVectors) {
  const HashEmbedder e;
  std::vector<std::string> texts;
  for (int i = 0; i < 100; ++i) texts.push_back("fixture string number " + std::to_string(i) + " about ulcers");
  const auto vectors = e.embed_batch(texts);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      EXPECT_FALSE(bit_equal(vectors[i], vectors[j])) << i << " vs " << j;
    }
  }
}

TEST(HashEmbedder, BlankTextRejected) {
  const HashEmbedder e;
  for (const char* t : {"", "   ", "\n\t"}) {
    try {
      (void)e.embed(t);
      FAIL() << "expected EmptyText";
    } catch (const Error& err) {
      EXPECT_EQ(err.code(), ErrorCode::EmptyText);
      EXPECT_EQ(err.stage(), Stage::embed);
    }
  }
}

TEST(HashEmbedder, BatchEqualsMap) {
  const HashEmbedder e;
  EXPECT_TRUE(e.embed_batch({}).empty());
  const std::vector<std::string> ab{"a", "b"};
  const auto pair = e.embed_batch(ab);
  ASSERT_EQ(pair.size(), 2u);
  EXPECT_TRUE(bit_equal(pair[0], e.embed("a")));
  EXPECT_TRUE(bit_equal(pair[1], e.embed("b")));

  auto texts = fixture_chunks();
  while (texts.size() < 100) texts.push_back("extra chunk " + std::to_string(texts.size()));
  texts.resize(100);
  const auto batch = e.embed_batch(texts);
  ASSERT_EQ(batch.size(), 100u);
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_TRUE(bit_equal(batch[i], e.embed(texts[i]))) << i;
}

TEST(HashEmbedder, BatchErrorNamesIndex) {
  const HashEmbedder e;
  const std::vector<std::string> texts{"ok", "fine", " "};
  try {
    (void)e.embed_batch(texts);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::EmptyText);
    EXPECT_NE(std::string(err.what()).find("2"), std::string::npos);
  }
}

TEST(Cosine, Basics) {
  Eigen::VectorXf a(2), b(2);
  a << 1, 0;
  b << 0, 3;
  EXPECT_DOUBLE_EQ(cosine(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine(a, a * 5), 1.0);
  EXPECT_DOUBLE_EQ(cosine(a, Eigen::VectorXf::Zero(2)), 0.0);
}

TEST(RemoteEmbedder, NormalizesAndPreservesOrder) {
  MockEmbeddingServer server(8);
  RemoteEmbedderConfig c;
  c.base_url = server.url();
  c.model = "mini";
  c.dim = 8;
  c.max_batch = 2;
  const RemoteEmbedder e(c);
  EXPECT_EQ(e.spec().embedder_id, "remote:mini/8");
  const std::vector<std::string> texts{"a", "b", "c"};
  const auto v = e.embed_batch(texts);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(server.calls(), 2);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_TRUE(is_unit_norm(v[i]));
  EXPECT_FLOAT_EQ(v[0][0], 1.0f);
  EXPECT_FLOAT_EQ(v[1][1], 1.0f);
  EXPECT_FLOAT_EQ(v[2][0], 1.0f);  // second request restarts at index 0
}

TEST(RemoteEmbedder, DimensionMismatch) {
  MockEmbeddingServer server(8);
  RemoteEmbedderConfig c;
  c.base_url = server.url();
  c.dim = 16;
  try {
    (void)RemoteEmbedder(c).embed("hello");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(RemoteEmbedder, UnreachableServer) {
  RemoteEmbedderConfig c;
  c.base_url = "http://127.0.0.1:" + std::to_string(medrag::testing::closed_port());
  c.retries = 0;
  c.timeout = std::chrono::milliseconds(500);
  try {
    (void)RemoteEmbedder(c).embed("hello");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::BackendUnavailable);
  }
}
