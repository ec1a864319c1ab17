#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zpd {

enum class Role { system, user, assistant, tool };

const char* role_name(Role r);
Role role_from_name(const std::string& name);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct SamplingParams {
    double temperature = 0.6;
    double top_p = 0.95;
    int max_tokens = 40960;
};

struct GenerationResult {
    std::string text;
    long input_tokens = 0;
    long output_tokens = 0;
    /// True when the provider reported no usage and counts were estimated
    /// (chars/4); the cost ledger flags such events in its audit log.
    bool usage_estimated = false;
};

struct JudgeVerdict {
    std::optional<std::string> extracted_final_answer;  // nullopt == "None"
    std::string reasoning;
    bool correct = false;
    int confidence = 100;
};

/// Transport-level failure. `retryable` distinguishes connection/rate-limit
/// errors (retried with backoff) from malformed responses (surfaced as-is).
class ProviderError : public std::runtime_error {
public:
    ProviderError(const std::string& what, bool retryable)
        : std::runtime_error(what), retryable_(retryable) {}
    bool retryable() const { return retryable_; }

private:
    bool retryable_;
};

/// Judge reply missing required fields; carries the raw reply text.
class JudgeParseError : public std::runtime_error {
public:
    JudgeParseError(const std::string& what, std::string raw_reply)
        : std::runtime_error(what + "\n--- raw reply ---\n" + raw_reply),
          raw_reply_(std::move(raw_reply)) {}
    const std::string& raw_reply() const { return raw_reply_; }

private:
    std::string raw_reply_;
};

struct RetryPolicy {
    int max_retries = 3;
    int base_delay_ms = 1000;
    double factor = 2.0;
};

void sleep_ms(long ms);

/// Run `fn`, retrying on retryable ProviderError with exponential backoff.
/// Non-retryable errors and exhausted retries propagate.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
    int attempt = 0;
    for (;;) {
        try {
            return fn();
        } catch (const ProviderError& e) {
            if (!e.retryable() || attempt >= policy.max_retries) throw;
            double delay = policy.base_delay_ms;
            for (int i = 0; i < attempt; ++i) delay *= policy.factor;
            ++attempt;
            if (delay > 0) sleep_ms(static_cast<long>(delay));
        }
    }
}

/// Raises std::invalid_argument on empty message lists, empty user/system
/// content, or two consecutive assistant messages.
void validate_messages(std::span<const ChatMessage> messages);

class GenerationProvider {
public:
    virtual ~GenerationProvider() = default;
    virtual std::string identity() const = 0;
    /// pre: messages valid per validate_messages.
    virtual GenerationResult generate(std::span<const ChatMessage> messages,
                                      const SamplingParams& params) = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string identity() const = 0;
    virtual std::size_t dimension() const = 0;
    /// pre: every text non-empty. post: unit-norm vectors, one per text.
    virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

class RerankProvider {
public:
    virtual ~RerankProvider() = default;
    virtual std::string identity() const = 0;
    /// Query/candidate roles are preserved; no symmetry is assumed.
    virtual double rerank_similarity(const std::string& query, const std::string& candidate) = 0;
};

class JudgeProvider {
public:
    virtual ~JudgeProvider() = default;
    virtual std::string identity() const = 0;
    virtual JudgeVerdict judge_correct(const std::string& question, const std::string& response,
                                       const std::string& correct_answer) = 0;
};

/// Parse the structured judge reply:
///   extracted_final_answer: ...
///   reasoning: ...
///   correct: yes|no
///   confidence: 0..100
/// `correct` is mandatory and strictly yes/no; a missing or unparseable field
/// raises JudgeParseError with the raw text attached. `confidence` defaults
/// to 100; a trailing '%' is tolerated.
JudgeVerdict parse_judge_reply(const std::string& reply);

/// Inverse of parse_judge_reply (round-trips through it).
std::string serialize_judge_reply(const JudgeVerdict& verdict);

struct ProviderSet {
    std::shared_ptr<GenerationProvider> generation;
    std::shared_ptr<EmbeddingProvider> embedding;
    std::shared_ptr<RerankProvider> rerank;
    std::shared_ptr<JudgeProvider> judge;
};

}  // namespace zpd
