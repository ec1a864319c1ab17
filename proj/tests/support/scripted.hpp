#pragma once

// Scripted providers for tests: behavior is supplied by the test case, so
// trajectories, verdicts, and similarities can be forced down known paths.

#include "zpd/providers.hpp"

#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace zpd::test {

/// Replies come from a callback over the full message list; falls back to a
/// queue of canned replies when no callback is given.
class ScriptedGeneration : public GenerationProvider {
public:
    using Fn = std::function<std::string(std::span<const ChatMessage>)>;

    ScriptedGeneration() = default;
    explicit ScriptedGeneration(Fn fn) : fn_(std::move(fn)) {}
    explicit ScriptedGeneration(std::vector<std::string> replies)
        : queue_(replies.begin(), replies.end()) {}

    void push(std::string reply) { queue_.push_back(std::move(reply)); }

    std::string identity() const override { return "scripted:gen"; }

    GenerationResult generate(std::span<const ChatMessage> messages,
                              const SamplingParams& params) override {
        validate_messages(messages);
        (void)params;
        ++calls;
        std::string text;
        if (fn_) {
            text = fn_(messages);
        } else {
            if (queue_.empty()) throw ProviderError("scripted generation queue exhausted", false);
            text = queue_.front();
            queue_.pop_front();
        }
        GenerationResult r;
        r.text = std::move(text);
        long chars = 0;
        for (const auto& m : messages) chars += static_cast<long>(m.content.size());
        r.input_tokens = (chars + 3) / 4;
        r.output_tokens = (static_cast<long>(r.text.size()) + 3) / 4;
        return r;
    }

    int calls = 0;

private:
    Fn fn_;
    std::deque<std::string> queue_;
};

class ScriptedJudge : public JudgeProvider {
public:
    using Fn = std::function<JudgeVerdict(const std::string&, const std::string&,
                                          const std::string&)>;

    explicit ScriptedJudge(Fn fn) : fn_(std::move(fn)) {}

    std::string identity() const override { return "scripted:judge"; }

    JudgeVerdict judge_correct(const std::string& question, const std::string& response,
                               const std::string& correct_answer) override {
        ++calls;
        return fn_(question, response, correct_answer);
    }

    int calls = 0;

private:
    Fn fn_;
};

class ScriptedRerank : public RerankProvider {
public:
    using Fn = std::function<double(const std::string&, const std::string&)>;

    explicit ScriptedRerank(Fn fn) : fn_(std::move(fn)) {}

    std::string identity() const override { return "scripted:rerank"; }

    double rerank_similarity(const std::string& query, const std::string& candidate) override {
        ++calls;
        return fn_(query, candidate);
    }

    int calls = 0;

private:
    Fn fn_;
};

/// A provider that fails a fixed number of times before delegating.
class FlakyGeneration : public GenerationProvider {
public:
    FlakyGeneration(GenerationProvider& inner, int failures, bool retryable = true)
        : inner_(inner), failures_left_(failures), retryable_(retryable) {}

    std::string identity() const override { return "flaky:" + inner_.identity(); }

    GenerationResult generate(std::span<const ChatMessage> messages,
                              const SamplingParams& params) override {
        if (failures_left_ > 0) {
            --failures_left_;
            throw ProviderError("transient failure (scripted)", retryable_);
        }
        return inner_.generate(messages, params);
    }

private:
    GenerationProvider& inner_;
    int failures_left_;
    bool retryable_;
};

}  // namespace zpd::test
