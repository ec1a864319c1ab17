#pragma once

#include "zpd/providers.hpp"

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace zpd {

struct RawDocument {
    std::string doc_id;
    std::string source_uri;
    std::string body;
    std::optional<std::string> published_date;
};

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::string text;
    std::optional<std::vector<double>> embedding;  // unit norm when present
};

/// Unordered chunk triplet, canonicalized by sorted chunk_id. pairwise_sims
/// holds [sim(0,1), sim(0,2), sim(1,2)] in canonical order.
struct CompositeUnit {
    std::array<std::string, 3> chunk_ids;
    std::array<double, 3> pairwise_sims;

    std::string unit_id() const { return chunk_ids[0] + "+" + chunk_ids[1] + "+" + chunk_ids[2]; }
    double min_sim() const;
};

struct IndexConfig {
    int k_nn = 10;        // must be >= 2
    double tau_theme = 0.8;
};

void validate_index_config(const IndexConfig& cfg);

struct ChunkerOptions {
    int min_words = 200;
    int max_words = 500;
};

/// Split on paragraph boundaries, accumulating paragraphs toward
/// [min_words, max_words] per chunk; an oversized paragraph is split on word
/// boundaries. Every chunk carries doc_id lineage.
std::vector<Chunk> chunk_document_fallback(const RawDocument& doc, const ChunkerOptions& opts = {});

/// Provider-backed chunking with the chunker prompt; the reply is split on
/// the "---" separator lines. Falls back to the deterministic splitter after
/// retries are exhausted, recording a warning through `warn`. `on_usage`
/// observes the provider call for cost accounting.
class PromptSet;
std::vector<Chunk> chunk_document(const RawDocument& doc, GenerationProvider* provider,
                                  const PromptSet& prompts, const RetryPolicy& retry = {},
                                  const std::function<void(const std::string&)>& warn = nullptr,
                                  const ChunkerOptions& opts = {},
                                  const std::function<void(const GenerationResult&)>& on_usage = nullptr);

struct Neighbor {
    std::string chunk_id;
    double cosine = 0.0;
};

/// Exact cosine nearest-neighbor index over unit-norm chunk embeddings.
/// Immutable after build; queries are safe to run concurrently and the batch
/// query parallelizes across query chunks.
class VectorIndex {
public:
    /// pre: every chunk carries a unit-norm embedding of equal dimension;
    /// violations raise with the offending chunk_id.
    static VectorIndex build(const std::vector<Chunk>& chunks);

    std::size_t size() const { return ids_.size(); }
    std::size_t dimension() const { return dim_; }
    const std::vector<std::string>& ids() const { return ids_; }
    bool contains(const std::string& chunk_id) const { return pos_.count(chunk_id) != 0; }
    std::span<const double> embedding_of(const std::string& chunk_id) const;

    /// Top-k by cosine, self excluded, sorted by cosine descending with ties
    /// broken by ascending chunk_id. k larger than the corpus returns all
    /// others. Unknown chunk_id raises.
    std::vector<Neighbor> nearest_neighbors(const std::string& chunk_id, std::size_t k) const;

    /// One neighbor list per indexed chunk, in ids() order (OpenMP-parallel).
    std::vector<std::vector<Neighbor>> all_nearest_neighbors(std::size_t k) const;

private:
    std::vector<Neighbor> topk_for_row(std::size_t row, std::size_t k) const;

    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> pos_;
    std::size_t dim_ = 0;
    std::vector<double> data_;  // row-major, ids_ order
};

/// For each chunk, enumerate all pairs within its k_nn neighborhood and emit
/// canonicalized triplets whose three pairwise cosines all exceed tau_theme.
/// Output is deduplicated and sorted by chunk id triple; parallel over seed
/// chunks with a deterministic merge.
std::vector<CompositeUnit> mine_composite_units(const VectorIndex& index, const IndexConfig& cfg);

// External interfaces: corpus/chunk/embedding files are JSON Lines.
std::vector<RawDocument> read_corpus_jsonl(const std::string& path);
void write_chunks_jsonl(const std::string& path, const std::vector<Chunk>& chunks);
std::vector<Chunk> read_chunks_jsonl(const std::string& path);
/// Sidecar keyed by chunk_id: {"chunk_id":..., "embedding":[...]}.
void write_embeddings_jsonl(const std::string& path, const std::vector<Chunk>& chunks);
void attach_embeddings_jsonl(const std::string& path, std::vector<Chunk>& chunks);

}  // namespace zpd
