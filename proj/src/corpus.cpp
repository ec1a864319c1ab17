#include "zpd/corpus.hpp"

#include "zpd/jsonl.hpp"
#include "zpd/prompts.hpp"
#include "zpd/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace zpd {

double CompositeUnit::min_sim() const {
    return std::min({pairwise_sims[0], pairwise_sims[1], pairwise_sims[2]});
}

void validate_index_config(const IndexConfig& cfg) {
    if (cfg.k_nn < 2) throw std::invalid_argument("k_nn must be >= 2");
    if (cfg.tau_theme < 0.0 || cfg.tau_theme > 1.0)
        throw std::invalid_argument("tau_theme must be in [0,1]");
}

namespace {

int word_count(std::string_view s) {
    int n = 0;
    bool in_word = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            ++n;
            in_word = true;
        }
    }
    return n;
}

std::vector<std::string> split_paragraphs(const std::string& body) {
    std::vector<std::string> paras;
    std::string cur;
    std::istringstream in(body);
    std::string line;
    auto flush = [&] {
        std::string p = trim(cur);
        if (!p.empty()) paras.push_back(p);
        cur.clear();
    };
    while (std::getline(in, line)) {
        if (trim(line).empty())
            flush();
        else
            cur += (cur.empty() ? "" : "\n") + line;
    }
    flush();
    return paras;
}

std::vector<std::string> split_oversized(const std::string& para, int max_words) {
    std::vector<std::string> pieces;
    std::istringstream in(para);
    std::string word, cur;
    int n = 0;
    while (in >> word) {
        cur += (cur.empty() ? "" : " ") + word;
        if (++n == max_words) {
            pieces.push_back(cur);
            cur.clear();
            n = 0;
        }
    }
    if (!cur.empty()) pieces.push_back(cur);
    return pieces;
}

Chunk make_chunk(const RawDocument& doc, std::size_t n, std::string text) {
    return Chunk{doc.doc_id + "#c" + std::to_string(n), doc.doc_id, std::move(text), std::nullopt};
}

}  // namespace

std::vector<Chunk> chunk_document_fallback(const RawDocument& doc, const ChunkerOptions& opts) {
    if (trim(doc.body).empty()) throw std::invalid_argument("document body must be non-empty");

    std::vector<std::string> units;
    for (const auto& para : split_paragraphs(doc.body)) {
        if (word_count(para) > opts.max_words) {
            for (auto& piece : split_oversized(para, opts.max_words)) units.push_back(piece);
        } else {
            units.push_back(para);
        }
    }

    std::vector<Chunk> chunks;
    std::string cur;
    int cur_words = 0;
    auto flush = [&] {
        if (cur.empty()) return;
        chunks.push_back(make_chunk(doc, chunks.size(), cur));
        cur.clear();
        cur_words = 0;
    };
    for (const auto& unit : units) {
        int w = word_count(unit);
        if (cur_words >= opts.min_words || cur_words + w > opts.max_words) flush();
        cur += (cur.empty() ? "" : "\n\n") + unit;
        cur_words += w;
    }
    flush();
    return chunks;
}

std::vector<Chunk> chunk_document(const RawDocument& doc, GenerationProvider* provider,
                                  const PromptSet& prompts, const RetryPolicy& retry,
                                  const std::function<void(const std::string&)>& warn,
                                  const ChunkerOptions& opts,
                                  const std::function<void(const GenerationResult&)>& on_usage) {
    if (trim(doc.body).empty()) throw std::invalid_argument("document body must be non-empty");
    if (!provider) return chunk_document_fallback(doc, opts);

    std::string reply;
    try {
        std::vector<ChatMessage> messages{
            {Role::system, prompts.get("chunker_system")},
            {Role::user, render(prompts.get("chunker_user"), {{"body", doc.body}})},
        };
        SamplingParams params;
        GenerationResult result =
            with_retries(retry, [&] { return provider->generate(messages, params); });
        if (on_usage) on_usage(result);
        reply = std::move(result.text);
    } catch (const std::exception& e) {
        if (warn)
            warn("chunking via provider failed for " + doc.doc_id + " (" + e.what() +
                 "); using fallback splitter");
        return chunk_document_fallback(doc, opts);
    }

    std::vector<Chunk> chunks;
    std::string cur;
    std::istringstream in(reply);
    std::string line;
    auto flush = [&] {
        std::string text = trim(cur);
        if (!text.empty()) chunks.push_back(make_chunk(doc, chunks.size(), text));
        cur.clear();
    };
    while (std::getline(in, line)) {
        if (trim(line) == marker::chunk_separator)
            flush();
        else
            cur += line + "\n";
    }
    flush();

    if (chunks.empty()) {
        if (warn) warn("provider returned no chunks for " + doc.doc_id + "; using fallback splitter");
        return chunk_document_fallback(doc, opts);
    }
    return chunks;
}

VectorIndex VectorIndex::build(const std::vector<Chunk>& chunks) {
    VectorIndex idx;
    for (const auto& c : chunks) {
        if (!c.embedding)
            throw std::invalid_argument("chunk without embedding: " + c.chunk_id);
        if (idx.dim_ == 0) idx.dim_ = c.embedding->size();
        if (c.embedding->size() != idx.dim_)
            throw std::invalid_argument("embedding dimension mismatch at chunk: " + c.chunk_id);
        double norm2 = 0.0;
        for (double v : *c.embedding) norm2 += v * v;
        if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6)
            throw std::invalid_argument("embedding is not unit norm: " + c.chunk_id);
        if (!idx.pos_.emplace(c.chunk_id, idx.ids_.size()).second)
            throw std::invalid_argument("duplicate chunk_id: " + c.chunk_id);
        idx.ids_.push_back(c.chunk_id);
        idx.data_.insert(idx.data_.end(), c.embedding->begin(), c.embedding->end());
    }
    return idx;
}

std::span<const double> VectorIndex::embedding_of(const std::string& chunk_id) const {
    auto it = pos_.find(chunk_id);
    if (it == pos_.end()) throw std::invalid_argument("unknown chunk_id: " + chunk_id);
    return {data_.data() + it->second * dim_, dim_};
}

std::vector<Neighbor> VectorIndex::topk_for_row(std::size_t row, std::size_t k) const {
    const double* q = data_.data() + row * dim_;
    std::vector<Neighbor> all;
    all.reserve(ids_.size() - 1);
    for (std::size_t j = 0; j < ids_.size(); ++j) {
        if (j == row) continue;
        const double* v = data_.data() + j * dim_;
        double dot = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) dot += q[d] * v[d];
        all.push_back({ids_[j], dot});
    }
    auto better = [](const Neighbor& a, const Neighbor& b) {
        if (a.cosine != b.cosine) return a.cosine > b.cosine;
        return a.chunk_id < b.chunk_id;
    };
    std::size_t take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                      better);
    all.resize(take);
    return all;
}

std::vector<Neighbor> VectorIndex::nearest_neighbors(const std::string& chunk_id,
                                                     std::size_t k) const {
    auto it = pos_.find(chunk_id);
    if (it == pos_.end()) throw std::invalid_argument("unknown chunk_id: " + chunk_id);
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    return topk_for_row(it->second, k);
}

std::vector<std::vector<Neighbor>> VectorIndex::all_nearest_neighbors(std::size_t k) const {
    std::vector<std::vector<Neighbor>> out(ids_.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(ids_.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = topk_for_row(static_cast<std::size_t>(i), k);
    return out;
}

std::vector<CompositeUnit> mine_composite_units(const VectorIndex& index, const IndexConfig& cfg) {
    validate_index_config(cfg);
    const auto& ids = index.ids();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(ids.size());
    auto neighborhoods = index.all_nearest_neighbors(static_cast<std::size_t>(cfg.k_nn));

    auto dot = [&](const std::string& a, const std::string& b) {
        auto va = index.embedding_of(a);
        auto vb = index.embedding_of(b);
        double s = 0.0;
        for (std::size_t d = 0; d < va.size(); ++d) s += va[d] * vb[d];
        return s;
    };

    std::vector<std::vector<CompositeUnit>> per_seed(ids.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& hood = neighborhoods[static_cast<std::size_t>(i)];
        const std::string& seed = ids[static_cast<std::size_t>(i)];
        auto& local = per_seed[static_cast<std::size_t>(i)];
        for (std::size_t a = 0; a < hood.size(); ++a) {
            if (hood[a].cosine <= cfg.tau_theme) continue;
            for (std::size_t b = a + 1; b < hood.size(); ++b) {
                if (hood[b].cosine <= cfg.tau_theme) continue;
                double sim_ab = dot(hood[a].chunk_id, hood[b].chunk_id);
                if (sim_ab <= cfg.tau_theme) continue;
                std::array<std::string, 3> triple{seed, hood[a].chunk_id, hood[b].chunk_id};
                std::sort(triple.begin(), triple.end());
                CompositeUnit unit{triple,
                                   {dot(triple[0], triple[1]), dot(triple[0], triple[2]),
                                    dot(triple[1], triple[2])}};
                local.push_back(std::move(unit));
            }
        }
    }

    std::vector<CompositeUnit> merged;
    for (auto& local : per_seed)
        for (auto& u : local) merged.push_back(std::move(u));
    std::sort(merged.begin(), merged.end(),
              [](const CompositeUnit& x, const CompositeUnit& y) { return x.chunk_ids < y.chunk_ids; });
    merged.erase(std::unique(merged.begin(), merged.end(),
                             [](const CompositeUnit& x, const CompositeUnit& y) {
                                 return x.chunk_ids == y.chunk_ids;
                             }),
                 merged.end());
    return merged;
}

std::vector<RawDocument> read_corpus_jsonl(const std::string& path) {
    std::vector<RawDocument> docs;
    std::set<std::string> seen;
    for (const auto& j : read_jsonl(path)) {
        RawDocument d;
        d.doc_id = j.at("doc_id").get<std::string>();
        d.source_uri = j.value("source_uri", "");
        d.body = j.at("body").get<std::string>();
        if (j.contains("published_date") && !j["published_date"].is_null())
            d.published_date = j["published_date"].get<std::string>();
        if (trim(d.body).empty())
            throw std::runtime_error("document with empty body: " + d.doc_id);
        if (!seen.insert(d.doc_id).second)
            throw std::runtime_error("duplicate doc_id in corpus: " + d.doc_id);
        docs.push_back(std::move(d));
    }
    return docs;
}

void write_chunks_jsonl(const std::string& path, const std::vector<Chunk>& chunks) {
    std::vector<Json> records;
    records.reserve(chunks.size());
    for (const auto& c : chunks)
        records.push_back({{"chunk_id", c.chunk_id}, {"doc_id", c.doc_id}, {"text", c.text}});
    write_jsonl(path, records);
}

std::vector<Chunk> read_chunks_jsonl(const std::string& path) {
    std::vector<Chunk> chunks;
    for (const auto& j : read_jsonl(path)) {
        Chunk c;
        c.chunk_id = j.at("chunk_id").get<std::string>();
        c.doc_id = j.at("doc_id").get<std::string>();
        c.text = j.at("text").get<std::string>();
        chunks.push_back(std::move(c));
    }
    return chunks;
}

void write_embeddings_jsonl(const std::string& path, const std::vector<Chunk>& chunks) {
    std::vector<Json> records;
    for (const auto& c : chunks) {
        if (!c.embedding) throw std::invalid_argument("chunk without embedding: " + c.chunk_id);
        records.push_back({{"chunk_id", c.chunk_id}, {"embedding", *c.embedding}});
    }
    write_jsonl(path, records);
}

void attach_embeddings_jsonl(const std::string& path, std::vector<Chunk>& chunks) {
    std::unordered_map<std::string, std::vector<double>> by_id;
    for (const auto& j : read_jsonl(path))
        by_id[j.at("chunk_id").get<std::string>()] = j.at("embedding").get<std::vector<double>>();
    for (auto& c : chunks) {
        auto it = by_id.find(c.chunk_id);
        if (it == by_id.end())
            throw std::runtime_error("no embedding for chunk: " + c.chunk_id);
        c.embedding = it->second;
    }
}

}  // namespace zpd
