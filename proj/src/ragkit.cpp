#include "hlsflow/ragkit.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <set>

#include <fmt/format.h>

#include "hlsflow/subprocess.hpp"
#include "json.hpp"

namespace hlsflow::ragkit {

using json = nlohmann::json;

namespace {

bool continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

std::size_t forward_to_boundary(std::string_view s, std::size_t p) {
  while (p < s.size() && continuation(static_cast<unsigned char>(s[p]))) ++p;
  return p;
}

bool ranks_before(const ScoredChunk& a, const ScoredChunk& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.chunk.doc_id != b.chunk.doc_id) return a.chunk.doc_id < b.chunk.doc_id;
  return a.chunk.chunk_index < b.chunk.chunk_index;
}

ProcessOptions command_options(double timeout_seconds, std::string input) {
  ProcessOptions o;
  o.stdin_text = std::move(input);
  if (timeout_seconds > 0)
    o.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_seconds * 1000));
  return o;
}

void check_process(const ProcessResult& r, const std::string& what) {
  if (r.ok()) return;
  if (r.spawn_failed) throw Error(what + ": " + r.error);
  if (r.timed_out) throw Error(what + ": timed out");
  if (r.term_signal) throw Error(fmt::format("{}: killed by signal {}", what, r.term_signal));
  throw Error(fmt::format("{}: exit code {}: {}", what, r.exit_code, trim(r.stderr_text)));
}

} // namespace

std::vector<Chunk> chunk_document(const std::string& doc_id, std::string_view text, std::size_t window,
                                  std::size_t stride) {
  if (window < 1) throw ValidationError("chunk window must be >= 1");
  if (stride < 1 || stride > window) throw ValidationError("chunk stride must be in [1, window]");
  std::vector<Chunk> out;
  if (text.empty()) return out;
  for (std::size_t nominal = 0; nominal < text.size(); nominal += stride) {
    std::size_t begin = forward_to_boundary(text, nominal);
    if (begin >= text.size()) break;
    if (!out.empty() && begin <= out.back().byte_offset) continue;
    std::size_t end = forward_to_boundary(text, std::min(text.size(), begin + window));
    out.push_back(Chunk{doc_id, out.size(), begin, std::string(text.substr(begin, end - begin))});
    if (text.size() <= window) break;
  }
  return out;
}

void RetrievalConfig::validate() const {
  if (m < 1 || m > k) throw ValidationError(fmt::format("retrieval needs 1 <= m <= k (m={}, k={})", m, k));
  if (window_bytes < 1) throw ValidationError("window_bytes must be >= 1");
  if (stride_bytes < 1 || stride_bytes > window_bytes) throw ValidationError("stride_bytes must be in [1, window_bytes]");
}

void normalize(Vector& v) {
  long double sum = 0;
  for (double x : v) sum += static_cast<long double>(x) * x;
  if (sum == 0) return;
  double norm = static_cast<double>(std::sqrt(sum));
  for (double& x : v) x /= norm;
}

double cosine_unit(const Vector& a, const Vector& b) {
  long double dot = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) dot += static_cast<long double>(a[i]) * b[i];
  return std::clamp(static_cast<double>(dot), -1.0, 1.0);
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && (std::isalnum(u) || c == '_')) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension < 1) throw ValidationError("embedding dimension must be >= 1");
}

Vector HashingEmbedder::embed_one(std::string_view text) const {
  Vector v(dimension_, 0.0);
  auto tokens = tokenize_words(text);
  if (tokens.empty()) {
    v[0] = 1.0;
    return v;
  }
  for (const auto& t : tokens) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    v[h % dimension_] += 1.0;
  }
  normalize(v);
  return v;
}

std::vector<Vector> HashingEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

CommandEmbedder::CommandEmbedder(std::string command, std::size_t dimension, double timeout_seconds)
    : command_(std::move(command)), dimension_(dimension), timeout_seconds_(timeout_seconds) {
  if (command_.empty()) throw ValidationError("embedder command is empty");
  if (dimension_ < 1) throw ValidationError("embedding dimension must be >= 1");
}

std::vector<Vector> CommandEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  std::string input;
  for (const auto& t : texts) input += json(t).dump() + "\n";
  auto r = run_shell(command_, command_options(timeout_seconds_, std::move(input)));
  check_process(r, "embedder command");
  std::vector<Vector> out;
  for (const auto& line : split_lines(r.stdout_text)) {
    if (trim(line).empty()) continue;
    try {
      auto v = json::parse(line).get<Vector>();
      if (v.size() != dimension_)
        throw Error(fmt::format("embedder returned dimension {}, expected {}", v.size(), dimension_));
      out.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw Error(std::string("embedder output is not a JSON number array: ") + e.what());
    }
  }
  if (out.size() != texts.size())
    throw Error(fmt::format("embedder returned {} vectors for {} texts", out.size(), texts.size()));
  return out;
}

Index::Index(std::size_t dimension) : dimension_(dimension) {
  if (dimension < 1) throw ValidationError("index dimension must be >= 1");
}

Index::Index(const Index& other) {
  std::shared_lock lock(other.mutex_);
  dimension_ = other.dimension_;
  entries_ = other.entries_;
}

Index& Index::operator=(const Index& other) {
  if (this == &other) return *this;
  std::unique_lock a(mutex_, std::defer_lock);
  std::shared_lock b(other.mutex_, std::defer_lock);
  std::lock(a, b);
  dimension_ = other.dimension_;
  entries_ = other.entries_;
  return *this;
}

std::size_t Index::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void Index::add(const std::vector<Chunk>& chunks, Embedder& embedder) {
  if (embedder.dimension() != dimension_)
    throw ValidationError(fmt::format("embedder dimension {} does not match index dimension {}",
                                      embedder.dimension(), dimension_));
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  auto vectors = embedder.embed(texts);
  if (vectors.size() != chunks.size()) throw Error("embedder returned the wrong number of vectors");
  for (std::size_t i = 0; i < chunks.size(); ++i) add_embedded(chunks[i], std::move(vectors[i]));
}

void Index::add_embedded(Chunk chunk, Vector vector) {
  if (vector.size() != dimension_)
    throw ValidationError(fmt::format("vector dimension {} does not match index dimension {}", vector.size(),
                                      dimension_));
  normalize(vector);
  std::unique_lock lock(mutex_);
  entries_.push_back(Entry{std::move(chunk), std::move(vector)});
}

std::vector<ScoredChunk> Index::retrieve(std::string_view query, Embedder& embedder, std::size_t k) const {
  if (embedder.dimension() != dimension_)
    throw ValidationError(fmt::format("embedder dimension {} does not match index dimension {}",
                                      embedder.dimension(), dimension_));
  auto v = embedder.embed({std::string(query)});
  if (v.size() != 1) throw Error("embedder returned no query vector");
  return retrieve_vector(std::move(v[0]), k);
}

std::vector<ScoredChunk> Index::retrieve_vector(Vector query, std::size_t k) const {
  if (query.size() != dimension_)
    throw ValidationError(fmt::format("query dimension {} does not match index dimension {}", query.size(),
                                      dimension_));
  normalize(query);
  std::shared_lock lock(mutex_);
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) scored.emplace_back(cosine_unit(query, entries_[i].vector), i);
  auto before = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    const auto& ca = entries_[a.second].chunk;
    const auto& cb = entries_[b.second].chunk;
    if (ca.doc_id != cb.doc_id) return ca.doc_id < cb.doc_id;
    return ca.chunk_index < cb.chunk_index;
  };
  std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), before);
  std::vector<ScoredChunk> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({entries_[scored[i].second].chunk, scored[i].first});
  return out;
}

void Index::save(const std::filesystem::path& path) const {
  std::shared_lock lock(mutex_);
  std::string out = json{{"format", "hlsflow-rag-index"},
                         {"version", 1},
                         {"dimension", dimension_},
                         {"count", entries_.size()}}
                        .dump() +
                    "\n";
  for (const auto& e : entries_) {
    out += json{{"doc_id", e.chunk.doc_id},
                {"chunk_index", e.chunk.chunk_index},
                {"offset", e.chunk.byte_offset},
                {"text", e.chunk.text},
                {"vector", e.vector}}
               .dump() +
           "\n";
  }
  write_file(path, out);
}

Index Index::load(const std::filesystem::path& path) {
  auto lines = split_lines(read_file(path));
  if (lines.empty()) throw ValidationError(path.string() + ": empty index file");
  try {
    auto header = json::parse(lines[0]);
    if (header.value("format", "") != "hlsflow-rag-index")
      throw ValidationError(path.string() + ": not an hlsflow-rag-index file");
    if (header.value("version", 0) != 1)
      throw ValidationError(path.string() + ": unsupported index version " + header["version"].dump());
    Index index(header.at("dimension").get<std::size_t>());
    auto count = header.at("count").get<std::size_t>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      auto j = json::parse(lines[i]);
      Chunk c{j.at("doc_id").get<std::string>(), j.at("chunk_index").get<std::size_t>(),
              j.at("offset").get<std::size_t>(), j.at("text").get<std::string>()};
      auto v = j.at("vector").get<Vector>();
      if (v.size() != index.dimension_)
        throw ValidationError(fmt::format("{}: line {} has dimension {}", path.string(), i + 1, v.size()));
      index.entries_.push_back(Entry{std::move(c), std::move(v)});
    }
    if (index.size() != count)
      throw ValidationError(fmt::format("{}: header count {} but {} entries", path.string(), count, index.size()));
    return index;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<double> IdentityReranker::score(std::string_view, const std::vector<ScoredChunk>& candidates) {
  std::vector<double> out;
  for (const auto& c : candidates) out.push_back(c.score);
  return out;
}

std::vector<double> TokenOverlapReranker::score(std::string_view query, const std::vector<ScoredChunk>& candidates) {
  auto qv = tokenize_words(query);
  std::set<std::string> q(qv.begin(), qv.end());
  std::vector<double> out;
  for (const auto& c : candidates) {
    if (q.empty()) {
      out.push_back(0);
      continue;
    }
    auto cv = tokenize_words(c.chunk.text);
    std::set<std::string> cs(cv.begin(), cv.end());
    std::size_t hit = 0;
    for (const auto& t : q) hit += cs.count(t);
    out.push_back(static_cast<double>(hit) / static_cast<double>(q.size()));
  }
  return out;
}

CommandReranker::CommandReranker(std::string command, double timeout_seconds)
    : command_(std::move(command)), timeout_seconds_(timeout_seconds) {
  if (command_.empty()) throw ValidationError("reranker command is empty");
}

std::vector<double> CommandReranker::score(std::string_view query, const std::vector<ScoredChunk>& candidates) {
  json in{{"query", std::string(query)}, {"candidates", json::array()}};
  for (const auto& c : candidates) in["candidates"].push_back(c.chunk.text);
  auto r = run_shell(command_, command_options(timeout_seconds_, in.dump() + "\n"));
  check_process(r, "reranker command");
  std::vector<double> out;
  for (const auto& line : split_lines(r.stdout_text)) {
    auto t = trim(line);
    if (t.empty()) continue;
    auto v = parse_double(t);
    if (!v) throw Error("reranker output line is not a number: " + t);
    out.push_back(*v);
  }
  if (out.size() != candidates.size())
    throw Error(fmt::format("reranker returned {} scores for {} candidates", out.size(), candidates.size()));
  return out;
}

std::vector<ScoredChunk> two_stage_query(const Index& index, std::string_view query, Embedder& embedder,
                                         Reranker& reranker, const RetrievalConfig& config) {
  config.validate();
  std::vector<ScoredChunk> candidates;
  try {
    candidates = index.retrieve(query, embedder, config.k);
  } catch (const std::exception& e) {
    throw StageError("retrieve", e.what());
  }
  std::vector<double> scores;
  try {
    scores = reranker.score(query, candidates);
    if (scores.size() != candidates.size())
      throw Error(fmt::format("{} scores for {} candidates", scores.size(), candidates.size()));
  } catch (const std::exception& e) {
    throw StageError("rerank", e.what());
  }
  std::vector<ScoredChunk> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back({candidates[i].chunk, scores[i]});
  std::stable_sort(out.begin(), out.end(), ranks_before);
  if (out.size() > config.m) out.resize(config.m);
  return out;
}

Index index_directory(const std::filesystem::path& dir, Embedder& embedder, const RetrievalConfig& config) {
  config.validate();
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::vector<std::pair<std::string, std::filesystem::path>> docs;
  for (const auto& f : files) docs.emplace_back(std::filesystem::relative(f, dir).generic_string(), f);
  std::sort(docs.begin(), docs.end());
  Index index(embedder.dimension());
  for (const auto& [id, path] : docs) {
    auto text = read_file(path);
    if (text.find('\0') != std::string::npos) continue;
    index.add(chunk_document(id, text, config.window_bytes, config.stride_bytes), embedder);
  }
  return index;
}

} // namespace hlsflow::ragkit
