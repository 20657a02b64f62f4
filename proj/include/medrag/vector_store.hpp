#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "medrag/embedding.hpp"

namespace medrag {

using Metadata = std::map<std::string, std::string>;

struct VectorRecord {
  std::string chunk_id;
  std::string doc_id;
  EmbeddingVector vector;
  std::string text;
  Metadata metadata;  // source_path, seq, char_start, char_end
  std::string embedder_id;
};

struct SearchHit {
  std::string chunk_id;
  std::string doc_id;
  double score = 0.0;
  std::string text;
  Metadata metadata;
};

inline constexpr int kIndexFormatVersion = 1;

/// Flat exact-search collection. Vectors live column-wise in one dense
/// matrix; search is a single matrix-vector product plus partial sort.
///
/// Reader-writer contract: search/get/save take a shared lock, upsert an
/// exclusive one, so a search never observes a partially applied upsert.
class Collection {
 public:
  using Clock = std::chrono::system_clock;

  Collection(std::string name, std::string embedder_id, Eigen::Index dim,
             Clock::time_point created_at = Clock::now());
  Collection(Collection&& other) noexcept;
  Collection& operator=(Collection&&) = delete;
  Collection(const Collection&) = delete;
  Collection& operator=(const Collection&) = delete;

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] const std::string& embedder_id() const { return embedder_id_; }
  [[nodiscard]] Eigen::Index dim() const { return dim_; }
  [[nodiscard]] Clock::time_point created_at() const { return created_at_; }
  [[nodiscard]] std::size_t size() const;

  /// All-or-nothing: every record is validated before any is applied.
  /// Records of the documents named in `replace_docs` are dropped first,
  /// under the same lock, so re-ingesting a shorter document leaves no
  /// stale chunks. Returns the number of records inserted or replaced.
  std::size_t upsert(std::span<const VectorRecord> records,
                     std::span<const std::string> replace_docs = {});

  /// Exact top-k by cosine (dot product of unit vectors), descending score,
  /// ties by ascending chunk_id. An empty collection yields no hits.
  [[nodiscard]] std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t top_k,
                                              std::optional<std::string_view> doc_id = {}) const;

  [[nodiscard]] std::optional<VectorRecord> get(std::string_view chunk_id) const;

  /// Snapshot in insertion order.
  [[nodiscard]] std::vector<VectorRecord> records() const;

  /// Writes {index_dir}/{name}/manifest and {index_dir}/{name}/records.
  void save(const std::filesystem::path& index_dir) const;

  /// Reads a collection directory written by save().
  static Collection load(const std::filesystem::path& collection_dir);

 private:
  struct Entry {
    std::string chunk_id;
    std::string doc_id;
    std::string text;
    Metadata metadata;
  };

  void reserve_columns(Eigen::Index count);
  void drop_documents(std::span<const std::string> doc_ids);
  [[nodiscard]] VectorRecord make_record(std::size_t i) const;

  std::string name_;
  std::string embedder_id_;
  Eigen::Index dim_;
  Clock::time_point created_at_;

  mutable std::shared_mutex mutex_;
  std::vector<Entry> entries_;
  Eigen::MatrixXf vectors_;  // dim x capacity; first entries_.size() columns live
  std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace medrag
