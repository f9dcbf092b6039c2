// Copyright 2026 The avllm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Chunked document store with exact top-k cosine retrieval and NDJSON
// persistence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avllm/embedder.hpp"
#include "avllm/error.hpp"
#include "avllm/jsonl.hpp"
#include "avllm/utf8.hpp"

namespace avllm {

using ChunkId = std::uint64_t;

inline constexpr std::size_t kDefaultChunkSize = 800;
inline constexpr std::size_t kDefaultChunkOverlap = 200;
inline constexpr int kIndexFormatVersion = 1;

/// A slice [start_offset, end_offset) of a document, in codepoints.
struct Chunk {
  ChunkId chunk_id = 0;
  std::string doc_id;
  std::size_t start_offset = 0;
  std::size_t end_offset = 0;
  std::string text;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct EmbeddedChunk {
  Chunk chunk;
  EmbeddingVector vector;

  friend bool operator==(const EmbeddedChunk&, const EmbeddedChunk&) = default;
};

struct RetrievalHit {
  ChunkId chunk_id = 0;
  std::string doc_id;
  std::string text;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

/// Splits `text` into windows of `size` codepoints advancing by
/// size - overlap. The first window reaching the end of the text is
/// truncated there and is the last one. Chunk ids are left at 0.
inline std::vector<Chunk> chunk_document(std::string_view doc_id, std::string_view text,
                                         std::size_t size, std::size_t overlap) {
  if (size == 0) throw InvalidChunking("chunk size must be >= 1");
  if (overlap >= size) {
    throw InvalidChunking("overlap (" + std::to_string(overlap) + ") must be smaller than size (" +
                          std::to_string(size) + ")");
  }
  if (!utf8::is_valid(text)) throw InvalidArgument("document '" + std::string(doc_id) + "' is not valid UTF-8");

  const std::u32string cps = utf8::decode(text);
  const std::size_t stride = size - overlap;
  std::vector<Chunk> chunks;
  for (std::size_t start = 0; start < cps.size(); start += stride) {
    const std::size_t end = std::min(start + size, cps.size());
    chunks.push_back({0, std::string(doc_id), start, end,
                      utf8::encode(std::u32string_view(cps).substr(start, end - start))});
    if (end == cps.size()) break;
  }
  return chunks;
}

/// s(u, v) = u.v / (|u| |v|), clamped to [-1, 1].
inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionMismatch("cosine of vectors with dimensions " + std::to_string(u.size()) +
                            " and " + std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw ZeroVector("cosine similarity with a zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

inline double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  return cosine_similarity(u.values(), v.values());
}

/// Ordered collection of embedded chunks with unique, monotonically
/// assigned ids. Plain value type.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dimension = kDefaultDimension) : dimension_(dimension) {
    if (dimension_ == 0) throw InvalidArgument("index dimension must be positive");
  }

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  ChunkId next_chunk_id() const noexcept { return next_chunk_id_; }
  std::span<const EmbeddedChunk> records() const noexcept { return records_; }

  const EmbeddedChunk* find(ChunkId id) const {
    auto it = std::lower_bound(records_.begin(), records_.end(), id,
                               [](const EmbeddedChunk& r, ChunkId v) { return r.chunk.chunk_id < v; });
    return it != records_.end() && it->chunk.chunk_id == id ? &*it : nullptr;
  }

  /// An empty index takes on a new dimension; a populated one refuses.
  void adopt_dimension(std::size_t dimension) {
    if (dimension == dimension_) return;
    if (!empty()) {
      throw DimensionMismatch("index has dimension " + std::to_string(dimension_) +
                              ", embedder produces " + std::to_string(dimension));
    }
    if (dimension == 0) throw InvalidArgument("index dimension must be positive");
    dimension_ = dimension;
  }

  /// Assigns the next chunk id and appends.
  ChunkId append(Chunk chunk, EmbeddingVector vector) {
    check_dimension(vector);
    chunk.chunk_id = next_chunk_id_++;
    records_.push_back({std::move(chunk), std::move(vector)});
    return records_.back().chunk.chunk_id;
  }

  /// Removes every chunk of `doc_id`; returns how many were removed.
  std::size_t remove_document(std::string_view doc_id) {
    const auto before = records_.size();
    std::erase_if(records_, [&](const EmbeddedChunk& r) { return r.chunk.doc_id == doc_id; });
    return before - records_.size();
  }

  /// Reconstructs an index from persisted parts. Records must be sorted by
  /// ascending id, with every id below `next_chunk_id`.
  static VectorIndex restore(std::size_t dimension, ChunkId next_chunk_id,
                             std::vector<EmbeddedChunk> records) {
    VectorIndex index(dimension);
    for (std::size_t i = 0; i < records.size(); ++i) {
      index.check_dimension(records[i].vector);
      if (records[i].chunk.chunk_id >= next_chunk_id) {
        throw InvalidArgument("chunk id not below next_chunk_id");
      }
      if (i > 0 && records[i].chunk.chunk_id <= records[i - 1].chunk.chunk_id) {
        throw InvalidArgument("chunk ids not strictly increasing");
      }
    }
    index.records_ = std::move(records);
    index.next_chunk_id_ = next_chunk_id;
    return index;
  }

  friend bool operator==(const VectorIndex&, const VectorIndex&) = default;

 private:
  void check_dimension(const EmbeddingVector& v) const {
    if (v.dimension() != dimension_) {
      throw DimensionMismatch("vector dimension " + std::to_string(v.dimension()) +
                              " does not match index dimension " + std::to_string(dimension_));
    }
  }

  std::size_t dimension_;
  std::vector<EmbeddedChunk> records_;
  ChunkId next_chunk_id_ = 0;
};

struct IngestSummary {
  std::size_t chunks_added = 0;
  std::size_t chunks_skipped = 0;

  friend bool operator==(const IngestSummary&, const IngestSummary&) = default;
};

/// Chunks, embeds and stores a document, replacing any earlier chunks of the
/// same doc_id. Chunks the embedder rejects with EmptyInput are skipped and
/// counted. Nothing is modified if an error escapes.
inline IngestSummary upsert(VectorIndex& index, std::string_view doc_id, std::string_view text,
                            const Embedder& embedder, std::size_t size = kDefaultChunkSize,
                            std::size_t overlap = kDefaultChunkOverlap) {
  if (embedder.dimension() != index.dimension() && !index.empty()) {
    throw DimensionMismatch("index has dimension " + std::to_string(index.dimension()) +
                            ", embedder produces " + std::to_string(embedder.dimension()));
  }
  auto chunks = chunk_document(doc_id, text, size, overlap);

  IngestSummary summary;
  std::vector<EmbeddedChunk> staged;
  staged.reserve(chunks.size());
  for (auto& chunk : chunks) {
    try {
      EmbeddingVector v = embedder.embed(chunk.text);
      staged.push_back({std::move(chunk), std::move(v)});
    } catch (const EmptyInput&) {
      ++summary.chunks_skipped;
    }
  }

  index.adopt_dimension(embedder.dimension());
  index.remove_document(doc_id);
  for (auto& rec : staged) index.append(std::move(rec.chunk), std::move(rec.vector));
  summary.chunks_added = staged.size();
  return summary;
}

namespace detail {

inline bool ranks_before(double score_a, ChunkId id_a, double score_b, ChunkId id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

}  // namespace detail

/// Exact scan. Hits are ordered by descending score, ties by ascending
/// chunk id; an empty index yields no hits.
inline std::vector<RetrievalHit> search_topk(const VectorIndex& index, const EmbeddingVector& query,
                                             std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  if (index.empty()) return {};
  if (query.dimension() != index.dimension()) {
    throw DimensionMismatch("query dimension " + std::to_string(query.dimension()) +
                            " does not match index dimension " + std::to_string(index.dimension()));
  }

  struct Scored {
    double score;
    std::size_t pos;
    ChunkId id;
  };
  const auto records = index.records();
  std::vector<Scored> scored;
  scored.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    scored.push_back({cosine_similarity(query, records[i].vector), i, records[i].chunk.chunk_id});
  }
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const Scored& a, const Scored& b) {
                      return detail::ranks_before(a.score, a.id, b.score, b.id);
                    });

  std::vector<RetrievalHit> hits;
  hits.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const Chunk& c = records[scored[r].pos].chunk;
    hits.push_back({c.chunk_id, c.doc_id, c.text, scored[r].score, r + 1});
  }
  return hits;
}

// ---------------------------------------------------------------------------
// Persistence: a header line {format_version, dimension, next_chunk_id}
// followed by one {chunk_id, doc_id, start, end, text, vector} per line.
// Doubles are written in shortest round-trip form.

inline void write_index(const VectorIndex& index, std::ostream& out) {
  using Json = nlohmann::json;
  out << Json{{"format_version", kIndexFormatVersion},
              {"dimension", index.dimension()},
              {"next_chunk_id", index.next_chunk_id()}}
             .dump()
      << '\n';
  for (const auto& rec : index.records()) {
    const auto v = rec.vector.values();
    out << Json{{"chunk_id", rec.chunk.chunk_id},
                {"doc_id", rec.chunk.doc_id},
                {"start", rec.chunk.start_offset},
                {"end", rec.chunk.end_offset},
                {"text", rec.chunk.text},
                {"vector", std::vector<double>(v.begin(), v.end())}}
               .dump()
        << '\n';
  }
}

/// Writes to a sibling temporary file and renames it into place.
inline void persist(const VectorIndex& index, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    write_index(index, out);
    out.flush();
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

namespace detail {

template <typename T>
T require_uint(const nlohmann::json& obj, std::string_view key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError("missing field '" + std::string(key) + "'", line);
  if (!it->is_number_unsigned()) {
    throw FormatError("field '" + std::string(key) + "' must be a non-negative integer", line);
  }
  return it->get<T>();
}

}  // namespace detail

inline VectorIndex read_index(std::istream& in) {
  bool have_header = false;
  std::size_t dimension = 0;
  ChunkId next_id = 0;
  std::vector<EmbeddedChunk> records;
  std::unordered_set<ChunkId> seen;

  jsonl::for_each_object(in, [&](const jsonl::Json& obj, std::size_t line) {
    if (!have_header) {
      auto ver = obj.find("format_version");
      if (ver == obj.end()) throw FormatError("header lacks format_version", line);
      if (!ver->is_number_integer() || ver->get<std::int64_t>() != kIndexFormatVersion) {
        throw VersionError("unsupported index format_version " + ver->dump(), line);
      }
      dimension = detail::require_uint<std::size_t>(obj, "dimension", line);
      if (dimension == 0) throw FormatError("dimension must be positive", line);
      next_id = detail::require_uint<ChunkId>(obj, "next_chunk_id", line);
      have_header = true;
      return;
    }
    EmbeddedChunk rec;
    rec.chunk.chunk_id = detail::require_uint<ChunkId>(obj, "chunk_id", line);
    rec.chunk.doc_id = jsonl::require_string(obj, "doc_id", line);
    rec.chunk.start_offset = detail::require_uint<std::size_t>(obj, "start", line);
    rec.chunk.end_offset = detail::require_uint<std::size_t>(obj, "end", line);
    rec.chunk.text = jsonl::require_string(obj, "text", line);
    if (rec.chunk.start_offset >= rec.chunk.end_offset) throw FormatError("start must be < end", line);
    if (!utf8::is_valid(rec.chunk.text) ||
        utf8::length(rec.chunk.text) != rec.chunk.end_offset - rec.chunk.start_offset) {
      throw FormatError("text length does not match [start, end)", line);
    }
    if (rec.chunk.chunk_id >= next_id) throw FormatError("chunk_id not below next_chunk_id", line);
    if (!seen.insert(rec.chunk.chunk_id).second) throw FormatError("duplicate chunk_id", line);
    if (!records.empty() && rec.chunk.chunk_id < records.back().chunk.chunk_id) {
      throw FormatError("chunk_id out of order", line);
    }

    auto vec = obj.find("vector");
    if (vec == obj.end() || !vec->is_array()) throw FormatError("missing array field 'vector'", line);
    if (vec->size() != dimension) {
      throw FormatError("vector length " + std::to_string(vec->size()) +
                            " disagrees with header dimension " + std::to_string(dimension),
                        line);
    }
    std::vector<double> values;
    values.reserve(dimension);
    for (const auto& x : *vec) {
      if (!x.is_number()) throw FormatError("vector entries must be numbers", line);
      values.push_back(x.get<double>());
    }
    try {
      rec.vector = EmbeddingVector::from_unit(std::move(values));
    } catch (const Error& e) {
      throw FormatError(e.what(), line);
    }
    records.push_back(std::move(rec));
  });

  if (!have_header) throw FormatError("missing header line", 1);
  return VectorIndex::restore(dimension, next_id, std::move(records));
}

inline VectorIndex load_index(const std::filesystem::path& path) {
  auto in = jsonl::open_input(path.string());
  return read_index(in);
}

}  // namespace avllm
