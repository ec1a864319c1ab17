#pragma once

#include "zpd/prompts.hpp"
#include "zpd/providers.hpp"

#include <atomic>
#include <memory>
#include <string>

namespace zpd {

struct HttpProviderConfig {
    std::string base_url;  // e.g. "http://localhost:8000/v1"
    std::string model;
    std::string api_key_env;  // secrets come from the environment only
    RetryPolicy retry;
};

/// Chat-completions-compatible endpoint. Token counts mirror the reported
/// usage fields; when the server omits them a chars/4 estimate is used and
/// flagged on the result.
class HttpGenerationProvider : public GenerationProvider {
public:
    explicit HttpGenerationProvider(HttpProviderConfig config);
    std::string identity() const override;
    GenerationResult generate(std::span<const ChatMessage> messages,
                              const SamplingParams& params) override;

private:
    HttpProviderConfig config_;
};

/// Embeddings endpoint; vectors are re-normalized to unit length and a
/// dimension mismatch across the batch is rejected.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(HttpProviderConfig config);
    std::string identity() const override;
    std::size_t dimension() const override { return dimension_.load(); }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

private:
    HttpProviderConfig config_;
    std::atomic<std::size_t> dimension_{0};  // learned from the first response
};

/// Rerank endpoint: {"model", "query", "documents": [candidate]} ->
/// {"results": [{"relevance_score": s}]}, clamped into [0,1].
class HttpRerankProvider : public RerankProvider {
public:
    explicit HttpRerankProvider(HttpProviderConfig config);
    std::string identity() const override;
    double rerank_similarity(const std::string& query, const std::string& candidate) override;

private:
    HttpProviderConfig config_;
};

/// Judge on top of any generation provider: renders the grading prompt and
/// parses the structured field reply.
class PromptJudgeProvider : public JudgeProvider {
public:
    PromptJudgeProvider(std::shared_ptr<GenerationProvider> generation, const PromptSet& prompts);
    std::string identity() const override;
    JudgeVerdict judge_correct(const std::string& question, const std::string& response,
                               const std::string& correct_answer) override;

private:
    std::shared_ptr<GenerationProvider> generation_;
    std::string system_prompt_;
    std::string user_template_;
};

}  // namespace zpd
