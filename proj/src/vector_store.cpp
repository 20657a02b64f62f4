#include "medrag/vector_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medrag/codec.hpp"
#include "medrag/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace medrag {

namespace {

static_assert(sizeof(float) == 4);

std::string encode_vector(const EmbeddingVector& v) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(v.size()) * 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(v[i]);
    for (int b = 0; b < 4; ++b) {
      bytes[static_cast<std::size_t>(i) * 4 + static_cast<std::size_t>(b)] =
          static_cast<std::uint8_t>(bits >> (8 * b));
    }
  }
  return codec::base64_encode(bytes);
}

std::optional<EmbeddingVector> decode_vector(std::string_view text, Eigen::Index dim) {
  auto bytes = codec::base64_decode(text);
  if (!bytes || bytes->size() != static_cast<std::size_t>(dim) * 4) return std::nullopt;
  EmbeddingVector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>((*bytes)[static_cast<std::size_t>(i) * 4 +
                                                  static_cast<std::size_t>(b)])
              << (8 * b);
    }
    v[i] = std::bit_cast<float>(bits);
  }
  return v;
}

[[noreturn]] void corrupt(const std::string& message) {
  throw Error(ErrorCode::CorruptIndex, "corrupt index: " + message, Stage::search);
}

void write_file(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::PathNotFound, "missing index file " + path.string(), Stage::search);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Collection::Collection(std::string name, std::string embedder_id, Eigen::Index dim,
                       Clock::time_point created_at)
    : name_(std::move(name)),
      embedder_id_(std::move(embedder_id)),
      dim_(dim),
      created_at_(created_at),
      vectors_(dim, 0) {
  if (dim <= 0) throw Error(ErrorCode::InvalidArgument, "collection dim must be positive");
  if (name_.empty() || name_.find_first_of("/\\") != std::string::npos || name_ == "." ||
      name_ == "..") {
    throw Error(ErrorCode::InvalidArgument, "invalid collection name '" + name_ + "'");
  }
}

Collection::Collection(Collection&& other) noexcept
    : name_(std::move(other.name_)),
      embedder_id_(std::move(other.embedder_id_)),
      dim_(other.dim_),
      created_at_(other.created_at_) {
  std::unique_lock lock(other.mutex_);
  entries_ = std::move(other.entries_);
  vectors_ = std::move(other.vectors_);
  by_id_ = std::move(other.by_id_);
}

std::size_t Collection::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void Collection::reserve_columns(Eigen::Index count) {
  if (count <= vectors_.cols()) return;
  const Eigen::Index capacity = std::max<Eigen::Index>(count, std::max<Eigen::Index>(16, vectors_.cols() * 2));
  vectors_.conservativeResize(Eigen::NoChange, capacity);
}

void Collection::drop_documents(std::span<const std::string> doc_ids) {
  const std::set<std::string, std::less<>> drop(doc_ids.begin(), doc_ids.end());
  std::size_t kept = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (drop.contains(entries_[i].doc_id)) continue;
    if (kept != i) {
      entries_[kept] = std::move(entries_[i]);
      vectors_.col(static_cast<Eigen::Index>(kept)) = vectors_.col(static_cast<Eigen::Index>(i));
    }
    ++kept;
  }
  entries_.resize(kept);
  by_id_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) by_id_.emplace(entries_[i].chunk_id, i);
}

std::size_t Collection::upsert(std::span<const VectorRecord> records,
                               std::span<const std::string> replace_docs) {
  for (const auto& r : records) {
    if (r.vector.size() != dim_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "record " + r.chunk_id + " has dim " + std::to_string(r.vector.size()) +
                      ", collection has " + std::to_string(dim_),
                  Stage::ingest);
    }
    if (r.embedder_id != embedder_id_) {
      throw Error(ErrorCode::EmbedderMismatch,
                  "record " + r.chunk_id + " was embedded with '" + r.embedder_id +
                      "', collection uses '" + embedder_id_ + "'",
                  Stage::ingest);
    }
    if (r.chunk_id.empty()) throw Error(ErrorCode::InvalidArgument, "record without chunk_id");
  }

  std::unique_lock lock(mutex_);
  if (!replace_docs.empty()) drop_documents(replace_docs);
  reserve_columns(static_cast<Eigen::Index>(entries_.size() + records.size()));
  for (const auto& r : records) {
    Entry entry{r.chunk_id, r.doc_id, r.text, r.metadata};
    auto [it, inserted] = by_id_.try_emplace(r.chunk_id, entries_.size());
    if (inserted) {
      entries_.push_back(std::move(entry));
    } else {
      entries_[it->second] = std::move(entry);
    }
    vectors_.col(static_cast<Eigen::Index>(it->second)) = r.vector;
  }
  return records.size();
}

std::vector<SearchHit> Collection::search(const EmbeddingVector& query, std::size_t top_k,
                                          std::optional<std::string_view> doc_id) const {
  if (query.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "query dim " + std::to_string(query.size()) + " != collection dim " +
                    std::to_string(dim_),
                Stage::search);
  }
  if (top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be at least 1", Stage::search);

  std::shared_lock lock(mutex_);
  const Eigen::VectorXd q = query.cast<double>();
  std::vector<std::size_t> candidates;
  candidates.reserve(entries_.size());
  Eigen::VectorXd scores(static_cast<Eigen::Index>(entries_.size()));
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (doc_id && entries_[i].doc_id != *doc_id) continue;
    const auto col = static_cast<Eigen::Index>(i);
    scores[col] = vectors_.col(col).cast<double>().dot(q);
    candidates.push_back(i);
  }

  const auto better = [&](std::size_t a, std::size_t b) {
    const double sa = scores[static_cast<Eigen::Index>(a)];
    const double sb = scores[static_cast<Eigen::Index>(b)];
    if (sa != sb) return sa > sb;
    return entries_[a].chunk_id < entries_[b].chunk_id;
  };
  const std::size_t k = std::min(top_k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), better);

  std::vector<SearchHit> hits;
  hits.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto& e = entries_[candidates[j]];
    hits.push_back({e.chunk_id, e.doc_id, scores[static_cast<Eigen::Index>(candidates[j])], e.text,
                    e.metadata});
  }
  return hits;
}

VectorRecord Collection::make_record(std::size_t i) const {
  const auto& e = entries_[i];
  return {e.chunk_id, e.doc_id, vectors_.col(static_cast<Eigen::Index>(i)), e.text, e.metadata,
          embedder_id_};
}

std::optional<VectorRecord> Collection::get(std::string_view chunk_id) const {
  std::shared_lock lock(mutex_);
  auto it = by_id_.find(std::string(chunk_id));
  if (it == by_id_.end()) return std::nullopt;
  return make_record(it->second);
}

std::vector<VectorRecord> Collection::records() const {
  std::shared_lock lock(mutex_);
  std::vector<VectorRecord> out;
  out.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) out.push_back(make_record(i));
  return out;
}

void Collection::save(const fs::path& index_dir) const {
  std::string records;
  std::size_t count = 0;
  {
    std::shared_lock lock(mutex_);
    count = entries_.size();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      records += json{{"chunk_id", e.chunk_id},
                      {"doc_id", e.doc_id},
                      {"metadata", e.metadata},
                      {"text", e.text},
                      {"vector", encode_vector(vectors_.col(static_cast<Eigen::Index>(i)))}}
                     .dump();
      records += '\n';
    }
  }

  const json manifest{
      {"format", "medrag-index"},
      {"format_version", kIndexFormatVersion},
      {"name", name_},
      {"embedder_id", embedder_id_},
      {"dim", dim_},
      {"record_count", count},
      {"created_at_ms",
       std::chrono::duration_cast<std::chrono::milliseconds>(created_at_.time_since_epoch()).count()},
      {"checksum", "fnv1a64:" + codec::to_hex(codec::fnv1a64(records))},
  };

  const fs::path dir = index_dir / name_;
  fs::create_directories(dir);
  // Records first: a crash between the renames leaves a checksum mismatch,
  // which load() reports instead of serving a mixed snapshot.
  write_file(dir / "records", records);
  write_file(dir / "manifest", manifest.dump(2) + "\n");
}

Collection Collection::load(const fs::path& collection_dir) {
  const std::string manifest_text = read_file(collection_dir / "manifest");
  json manifest;
  try {
    manifest = json::parse(manifest_text);
  } catch (const json::exception& e) {
    corrupt(std::string("manifest is not JSON: ") + e.what());
  }

  std::string name, embedder_id, checksum;
  Eigen::Index dim = 0;
  std::size_t count = 0;
  std::int64_t created_ms = 0;
  try {
    if (manifest.at("format").get<std::string>() != "medrag-index") corrupt("unknown format tag");
    const int version = manifest.at("format_version").get<int>();
    if (version != kIndexFormatVersion) {
      throw Error(ErrorCode::VersionUnsupported,
                  "index format version " + std::to_string(version) + " is not supported",
                  Stage::search);
    }
    name = manifest.at("name").get<std::string>();
    embedder_id = manifest.at("embedder_id").get<std::string>();
    dim = manifest.at("dim").get<Eigen::Index>();
    count = manifest.at("record_count").get<std::size_t>();
    created_ms = manifest.at("created_at_ms").get<std::int64_t>();
    checksum = manifest.at("checksum").get<std::string>();
  } catch (const json::exception& e) {
    corrupt(std::string("bad manifest field: ") + e.what());
  }

  const std::string records_text = read_file(collection_dir / "records");
  constexpr std::string_view kPrefix = "fnv1a64:";
  const auto expected = checksum.starts_with(kPrefix)
                            ? codec::from_hex(std::string_view(checksum).substr(kPrefix.size()))
                            : std::nullopt;
  if (!expected) corrupt("unreadable checksum");
  if (*expected != codec::fnv1a64(records_text)) corrupt("checksum mismatch");

  Collection collection(name, embedder_id, dim,
                        Clock::time_point(std::chrono::milliseconds(created_ms)));
  std::vector<VectorRecord> records;
  records.reserve(count);
  std::istringstream lines(records_text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    try {
      const auto row = json::parse(line);
      auto vector = decode_vector(row.at("vector").get<std::string>(), dim);
      if (!vector) corrupt("bad vector encoding in record " + std::to_string(records.size()));
      records.push_back({row.at("chunk_id").get<std::string>(), row.at("doc_id").get<std::string>(),
                         std::move(*vector), row.at("text").get<std::string>(),
                         row.at("metadata").get<Metadata>(), embedder_id});
    } catch (const json::exception& e) {
      corrupt(std::string("bad record: ") + e.what());
    }
  }
  if (records.size() != count) corrupt("record count does not match manifest");
  collection.upsert(records);
  if (collection.size() != count) corrupt("duplicate chunk ids");
  return collection;
}

}  // namespace medrag
