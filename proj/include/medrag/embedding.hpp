#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace medrag {

/// Unit-norm embedding. Stored and persisted as 32-bit floats.
using EmbeddingVector = Eigen::VectorXf;

struct EmbedderSpec {
  std::string embedder_id;  // provider + model + dim, e.g. "hash-v1/384"
  Eigen::Index dim = 0;
};

template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const double denom = a.template cast<double>().norm() * b.template cast<double>().norm();
  if (denom == 0.0) return 0.0;
  return a.template cast<double>().dot(b.template cast<double>()) / denom;
}

template <typename Derived>
bool is_unit_norm(const Eigen::MatrixBase<Derived>& v, double tol = 1e-6) {
  return v.allFinite() && std::abs(v.template cast<double>().norm() - 1.0) <= tol;
}

class Embedder {
 public:
  virtual ~Embedder() = default;

  [[nodiscard]] virtual const EmbedderSpec& spec() const = 0;

  /// Throws Error(EmptyText) when `text` is blank.
  [[nodiscard]] virtual EmbeddingVector embed(std::string_view text) const = 0;

  /// Element i equals embed(texts[i]). Errors name the failing index.
  [[nodiscard]] virtual std::vector<EmbeddingVector> embed_batch(
      std::span<const std::string> texts) const;
};

/// Signed feature hashing of lowercased character trigrams ("hash-v1").
/// Deterministic and offline; stands in for a learned model.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(Eigen::Index dim = 384);

  [[nodiscard]] const EmbedderSpec& spec() const override { return spec_; }
  [[nodiscard]] EmbeddingVector embed(std::string_view text) const override;

 private:
  EmbedderSpec spec_;
};

struct RemoteEmbedderConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "all-MiniLM-L6-v2";
  Eigen::Index dim = 384;
  std::chrono::milliseconds timeout{10000};
  int retries = 2;
  std::size_t max_batch = 64;
};

/// Client for POST {base_url}/v1/embeddings. Vectors are re-normalized on
/// arrival and their dimension checked against the configured one.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config);

  [[nodiscard]] const EmbedderSpec& spec() const override { return spec_; }
  [[nodiscard]] EmbeddingVector embed(std::string_view text) const override;
  [[nodiscard]] std::vector<EmbeddingVector> embed_batch(
      std::span<const std::string> texts) const override;

 private:
  std::vector<EmbeddingVector> request(std::span<const std::string> texts) const;

  RemoteEmbedderConfig config_;
  EmbedderSpec spec_;
};

/// "hash-v1/{dim}". Remote embedders report "remote:{model}/{dim}".
std::string hash_embedder_id(Eigen::Index dim);

}  // namespace medrag
