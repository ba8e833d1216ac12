#pragma once
// Two-stage retrieval over chunked documents: exact cosine search, then rerank.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "hlsflow/common.hpp"

namespace hlsflow::ragkit {

struct Chunk {
  std::string doc_id;
  std::size_t chunk_index = 0;
  std::size_t byte_offset = 0;
  std::string text;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

// Windows start every `stride` bytes. Edges move forward to the next UTF-8
// character boundary, so a chunk may exceed `window` by up to 3 bytes.
std::vector<Chunk> chunk_document(const std::string& doc_id, std::string_view text, std::size_t window,
                                  std::size_t stride);

struct RetrievalConfig {
  std::size_t k = 20;
  std::size_t m = 5;
  std::size_t window_bytes = 1024;
  std::size_t stride_bytes = 512;

  void validate() const;
};

using Vector = std::vector<double>;

void normalize(Vector& v);  // zero vectors stay zero
double cosine_unit(const Vector& a, const Vector& b);  // both unit-norm; clamped to [-1, 1]

class Embedder {
public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
};

// Lowercased [A-Za-z0-9_] tokens hashed (FNV-1a) into `dimension` count buckets,
// then unit-normalized. Text without tokens maps to the first basis vector.
class HashingEmbedder : public Embedder {
public:
  explicit HashingEmbedder(std::size_t dimension = 256);
  std::size_t dimension() const override { return dimension_; }
  std::vector<Vector> embed(const std::vector<std::string>& texts) override;
  Vector embed_one(std::string_view text) const;

private:
  std::size_t dimension_;
};

// Sends one JSON string per line on stdin; expects one JSON array per line back.
class CommandEmbedder : public Embedder {
public:
  CommandEmbedder(std::string command, std::size_t dimension, double timeout_seconds = 600);
  std::size_t dimension() const override { return dimension_; }
  std::vector<Vector> embed(const std::vector<std::string>& texts) override;

private:
  std::string command_;
  std::size_t dimension_;
  double timeout_seconds_;
};

std::vector<std::string> tokenize_words(std::string_view text);

struct ScoredChunk {
  Chunk chunk;
  double score = 0;
};

// Exact full-scan index. Reads may run concurrently; writes take an exclusive lock.
class Index {
public:
  explicit Index(std::size_t dimension);
  Index(const Index& other);
  Index& operator=(const Index& other);

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const;

  void add(const std::vector<Chunk>& chunks, Embedder& embedder);
  void add_embedded(Chunk chunk, Vector vector);  // vector is normalized on insert

  // Highest cosine first; ties by (doc_id, chunk_index).
  std::vector<ScoredChunk> retrieve(std::string_view query, Embedder& embedder, std::size_t k) const;
  std::vector<ScoredChunk> retrieve_vector(Vector query, std::size_t k) const;

  // NDJSON: a header {"format","version","dimension","count"} then one
  // {doc_id, chunk_index, offset, text, vector} per line.
  void save(const std::filesystem::path& path) const;
  static Index load(const std::filesystem::path& path);

private:
  struct Entry {
    Chunk chunk;
    Vector vector;
  };
  std::size_t dimension_;
  std::vector<Entry> entries_;
  mutable std::shared_mutex mutex_;
};

class Reranker {
public:
  virtual ~Reranker() = default;
  // One score per candidate, in candidate order.
  virtual std::vector<double> score(std::string_view query, const std::vector<ScoredChunk>& candidates) = 0;
};

// Keeps the first-stage cosine scores.
class IdentityReranker : public Reranker {
public:
  std::vector<double> score(std::string_view query, const std::vector<ScoredChunk>& candidates) override;
};

// Fraction of distinct query tokens present in the candidate.
class TokenOverlapReranker : public Reranker {
public:
  std::vector<double> score(std::string_view query, const std::vector<ScoredChunk>& candidates) override;
};

// Sends {"query", "candidates": [text...]} on stdin; expects one number per line back.
class CommandReranker : public Reranker {
public:
  explicit CommandReranker(std::string command, double timeout_seconds = 600);
  std::vector<double> score(std::string_view query, const std::vector<ScoredChunk>& candidates) override;

private:
  std::string command_;
  double timeout_seconds_;
};

// A backend failure inside two_stage_query, tagged with "retrieve" or "rerank".
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + " stage failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

std::vector<ScoredChunk> two_stage_query(const Index& index, std::string_view query, Embedder& embedder,
                                         Reranker& reranker, const RetrievalConfig& config);

// Chunks every regular file under `dir` (sorted by relative path, which becomes
// the doc_id). Files containing NUL bytes are skipped.
Index index_directory(const std::filesystem::path& dir, Embedder& embedder, const RetrievalConfig& config);

} // namespace hlsflow::ragkit
