#include "medrag/embedding.hpp"

#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "medrag/codec.hpp"
#include "medrag/error.hpp"
#include "medrag/utf8.hpp"

namespace medrag {

namespace {

bool is_blank(std::string_view text) {
  const auto decoded = utf8::decode(text);
  if (!decoded) return text.find_first_not_of(" \t\n\r\f\v") == std::string_view::npos;
  return std::all_of(decoded->begin(), decoded->end(), utf8::is_space);
}

void require_text(std::string_view text) {
  if (is_blank(text)) throw Error(ErrorCode::EmptyText, "cannot embed blank text", Stage::embed);
}

[[noreturn]] void rethrow_with_index(const Error& e, std::size_t index) {
  throw Error(e.code(), "item " + std::to_string(index) + ": " + e.what(), e.stage());
}

}  // namespace

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      out.push_back(embed(texts[i]));
    } catch (const Error& e) {
      rethrow_with_index(e, i);
    }
  }
  return out;
}

std::string hash_embedder_id(Eigen::Index dim) { return "hash-v1/" + std::to_string(dim); }

HashEmbedder::HashEmbedder(Eigen::Index dim) : spec_{hash_embedder_id(dim), dim} {
  if (dim <= 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
}

EmbeddingVector HashEmbedder::embed(std::string_view text) const {
  require_text(text);
  auto decoded = utf8::decode(text);
  if (!decoded) throw Error(ErrorCode::InvalidArgument, "text is not valid UTF-8", Stage::embed);
  for (auto& c : *decoded) {
    if (c >= U'A' && c <= U'Z') c += U'a' - U'A';
  }
  const std::string lowered = utf8::encode(*decoded);

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(spec_.dim);
  const auto dim = static_cast<std::uint64_t>(spec_.dim);
  auto add = [&](std::string_view gram) {
    const std::uint64_t h = codec::fnv1a64(gram);
    acc[static_cast<Eigen::Index>(h % dim)] += (h >> 63) ? -1.0 : 1.0;
  };

  if (decoded->size() < 3) {
    add(lowered);
  } else {
    for (std::size_t i = 0; i + 3 <= decoded->size(); ++i) {
      add(utf8::encode(std::u32string_view(*decoded).substr(i, 3)));
    }
  }

  const double norm = acc.norm();
  if (norm == 0.0) {
    acc[static_cast<Eigen::Index>(codec::fnv1a64(lowered) % dim)] = 1.0;
    return acc.cast<float>();
  }
  return (acc / norm).cast<float>();
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config)
    : config_(std::move(config)),
      spec_{"remote:" + config_.model + "/" + std::to_string(config_.dim), config_.dim} {
  if (config_.dim <= 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
  const std::string owned(text);
  return embed_batch(std::span<const std::string>(&owned, 1)).front();
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      require_text(texts[i]);
    } catch (const Error& e) {
      rethrow_with_index(e, i);
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += config_.max_batch) {
    const auto n = std::min(config_.max_batch, texts.size() - start);
    try {
      auto part = request(texts.subspan(start, n));
      std::move(part.begin(), part.end(), std::back_inserter(out));
    } catch (const Error& e) {
      throw Error(e.code(), "batch at item " + std::to_string(start) + ": " + e.what(), e.stage());
    }
  }
  return out;
}

std::vector<EmbeddingVector> RemoteEmbedder::request(std::span<const std::string> texts) const {
  using nlohmann::json;
  const json body{{"model", config_.model}, {"input", texts}};

  httplib::Client client(config_.base_url);
  const auto secs = config_.timeout.count() / 1000;
  const auto usecs = (config_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);

  httplib::Result res;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    res = client.Post("/v1/embeddings", body.dump(), "application/json");
    if (res && res->status < 500) break;
    if (attempt < config_.retries) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
    }
  }
  if (!res) {
    throw Error(ErrorCode::BackendUnavailable,
                "embedding server unreachable: " + httplib::to_string(res.error()), Stage::embed);
  }
  if (res->status != 200) {
    throw Error(ErrorCode::BackendError,
                "embedding server returned " + std::to_string(res->status) + ": " + res->body,
                Stage::embed);
  }

  std::vector<EmbeddingVector> out(texts.size());
  std::vector<bool> filled(texts.size(), false);
  try {
    const auto parsed = json::parse(res->body);
    for (const auto& item : parsed.at("data")) {
      const auto index = item.at("index").get<std::size_t>();
      const auto values = item.at("embedding").get<std::vector<float>>();
      if (index >= texts.size()) throw Error(ErrorCode::BackendError, "index out of range", Stage::embed);
      if (static_cast<Eigen::Index>(values.size()) != config_.dim) {
        throw Error(ErrorCode::DimensionMismatch,
                    "expected dim " + std::to_string(config_.dim) + ", got " +
                        std::to_string(values.size()),
                    Stage::embed);
      }
      EmbeddingVector v = Eigen::Map<const EmbeddingVector>(values.data(), config_.dim);
      const float norm = v.norm();
      if (!std::isfinite(norm) || norm == 0.0f) {
        throw Error(ErrorCode::BackendError, "degenerate embedding", Stage::embed);
      }
      out[index] = v / norm;
      filled[index] = true;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendError, std::string("malformed embedding response: ") + e.what(),
                Stage::embed);
  }
  if (std::find(filled.begin(), filled.end(), false) != filled.end()) {
    throw Error(ErrorCode::BackendError, "embedding response is missing items", Stage::embed);
  }
  return out;
}

}  // namespace medrag
