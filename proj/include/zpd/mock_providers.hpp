#pragma once

#include "zpd/providers.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace zpd {

/// Rule-routed deterministic generation: rules are tried in registration
/// order against the message list; the first match handles the call. With no
/// match the reply is a stable echo derived from the input hash. Pure: the
/// output is a function of (messages, params, seed) only.
class MockGeneration : public GenerationProvider {
public:
    using Matcher = std::function<bool(std::span<const ChatMessage>)>;
    using Handler =
        std::function<std::string(std::span<const ChatMessage>, const SamplingParams&)>;

    explicit MockGeneration(std::uint64_t seed = 0) : seed_(seed) {}

    void add_rule(Matcher matcher, Handler handler);
    std::uint64_t seed() const { return seed_; }

    std::string identity() const override;
    GenerationResult generate(std::span<const ChatMessage> messages,
                              const SamplingParams& params) override;

private:
    std::uint64_t seed_;
    std::vector<std::pair<Matcher, Handler>> rules_;
};

/// Hash-derived unit vectors: token counts scatter into hashed coordinates,
/// then L2-normalize. Shared tokens yield high cosine, disjoint vocabularies
/// near-zero, identical texts exactly 1.
class MockEmbedding : public EmbeddingProvider {
public:
    explicit MockEmbedding(std::size_t dim = 64, std::uint64_t seed = 0)
        : dim_(dim), seed_(seed) {}

    std::string identity() const override;
    std::size_t dimension() const override { return dim_; }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

    std::vector<double> embed_one(const std::string& text) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Token-overlap coefficient: |tokens(q) ∩ tokens(c)| / max(|tokens(q)|, |tokens(c)|).
class MockRerank : public RerankProvider {
public:
    std::string identity() const override { return "mock:rerank:token-overlap"; }
    double rerank_similarity(const std::string& query, const std::string& candidate) override;
};

/// Exact match after whitespace/case normalization; strict by construction.
class MockJudge : public JudgeProvider {
public:
    std::string identity() const override { return "mock:judge:exact-match"; }
    JudgeVerdict judge_correct(const std::string& question, const std::string& response,
                               const std::string& correct_answer) override;
};

/// The gold-answer convention shared by all mock agents: a pure function of
/// the question text, so a mock agent can "know" the right answer exactly
/// when its scripted dice say so.
std::string mock_gold_answer(const std::string& question);

/// Full provider set able to drive the whole pipeline offline: chunker, seed
/// writer, refinement agent, and tooled/untooled research agents are routed
/// by their system prompts; correctness of agent answers is drawn
/// deterministically from (question, seed, role).
ProviderSet make_mock_providers(std::uint64_t seed);

}  // namespace zpd
