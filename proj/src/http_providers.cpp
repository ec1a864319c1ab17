#include "zpd/http_providers.hpp"

#include "zpd/jsonl.hpp"
#include "zpd/util.hpp"

#include "http_util.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace zpd {

namespace {

detail::Headers auth_headers(const std::string& api_key_env) {
    detail::Headers headers;
    if (!api_key_env.empty()) {
        if (auto key = getenv_opt(api_key_env))
            headers.emplace_back("Authorization", "Bearer " + *key);
    }
    return headers;
}

Json parse_body(const std::string& body, const std::string& url) {
    Json j = Json::parse(body, nullptr, false);
    if (j.is_discarded())
        throw ProviderError("malformed JSON response from " + url, false);
    return j;
}

}  // namespace

HttpGenerationProvider::HttpGenerationProvider(HttpProviderConfig config)
    : config_(std::move(config)) {}

std::string HttpGenerationProvider::identity() const {
    return "http:gen:" + config_.model + "@" + config_.base_url;
}

GenerationResult HttpGenerationProvider::generate(std::span<const ChatMessage> messages,
                                                  const SamplingParams& params) {
    validate_messages(messages);
    Json body{{"model", config_.model},
              {"temperature", params.temperature},
              {"top_p", params.top_p},
              {"max_tokens", params.max_tokens}};
    Json msgs = Json::array();
    for (const auto& m : messages)
        msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    body["messages"] = std::move(msgs);

    std::string url = config_.base_url + "/chat/completions";
    auto res = with_retries(config_.retry, [&] {
        return detail::http_post_json(url, body.dump(), auth_headers(config_.api_key_env));
    });

    Json j = parse_body(res.body, url);
    if (!j.contains("choices") || j["choices"].empty() ||
        !j["choices"][0].contains("message"))
        throw ProviderError("chat response missing choices[0].message from " + url, false);

    GenerationResult result;
    result.text = j["choices"][0]["message"].value("content", "");
    if (j.contains("usage") && j["usage"].contains("prompt_tokens") &&
        j["usage"].contains("completion_tokens")) {
        result.input_tokens = j["usage"]["prompt_tokens"].get<long>();
        result.output_tokens = j["usage"]["completion_tokens"].get<long>();
    } else {
        long prompt_chars = 0;
        for (const auto& m : messages) prompt_chars += static_cast<long>(m.content.size());
        result.input_tokens = (prompt_chars + 3) / 4;
        result.output_tokens = (static_cast<long>(result.text.size()) + 3) / 4;
        result.usage_estimated = true;
    }
    return result;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpProviderConfig config)
    : config_(std::move(config)) {}

std::string HttpEmbeddingProvider::identity() const {
    return "http:embed:" + config_.model + "@" + config_.base_url;
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(
    std::span<const std::string> texts) {
    for (const auto& t : texts)
        if (trim(t).empty()) throw std::invalid_argument("cannot embed empty text");

    Json body{{"model", config_.model}};
    body["input"] = Json::array();
    for (const auto& t : texts) body["input"].push_back(t);

    std::string url = config_.base_url + "/embeddings";
    auto res = with_retries(config_.retry, [&] {
        return detail::http_post_json(url, body.dump(), auth_headers(config_.api_key_env));
    });

    Json j = parse_body(res.body, url);
    if (!j.contains("data"))
        throw ProviderError("embeddings response missing data from " + url, false);

    std::vector<std::vector<double>> out;
    for (const auto& item : j["data"]) {
        auto vec = item.at("embedding").get<std::vector<double>>();
        std::size_t expected = 0;
        dimension_.compare_exchange_strong(expected, vec.size());
        if (vec.size() != dimension_.load())
            throw ProviderError("embedding dimension mismatch across batch", false);
        double norm = 0.0;
        for (double v : vec) norm += v * v;
        norm = std::sqrt(norm);
        if (norm <= 0.0) throw ProviderError("zero-norm embedding returned", false);
        for (double& v : vec) v /= norm;
        out.push_back(std::move(vec));
    }
    if (out.size() != texts.size())
        throw ProviderError("embeddings response count mismatch", false);
    return out;
}

HttpRerankProvider::HttpRerankProvider(HttpProviderConfig config) : config_(std::move(config)) {}

std::string HttpRerankProvider::identity() const {
    return "http:rerank:" + config_.model + "@" + config_.base_url;
}

double HttpRerankProvider::rerank_similarity(const std::string& query,
                                             const std::string& candidate) {
    if (trim(query).empty() || trim(candidate).empty())
        throw std::invalid_argument("rerank inputs must be non-empty");
    Json body{{"model", config_.model},
              {"query", query},
              {"documents", Json::array({candidate})}};
    std::string url = config_.base_url + "/rerank";
    auto res = with_retries(config_.retry, [&] {
        return detail::http_post_json(url, body.dump(), auth_headers(config_.api_key_env));
    });
    Json j = parse_body(res.body, url);
    if (!j.contains("results") || j["results"].empty() ||
        !j["results"][0].contains("relevance_score"))
        throw ProviderError("unparseable rerank score from " + url, false);
    double score = j["results"][0]["relevance_score"].get<double>();
    return std::min(1.0, std::max(0.0, score));
}

PromptJudgeProvider::PromptJudgeProvider(std::shared_ptr<GenerationProvider> generation,
                                         const PromptSet& prompts)
    : generation_(std::move(generation)),
      system_prompt_(prompts.get("judge_system")),
      user_template_(prompts.get("judge_user")) {}

std::string PromptJudgeProvider::identity() const {
    return "judge-over:" + generation_->identity();
}

JudgeVerdict PromptJudgeProvider::judge_correct(const std::string& question,
                                                const std::string& response,
                                                const std::string& correct_answer) {
    if (trim(question).empty() || trim(response).empty() || trim(correct_answer).empty())
        throw std::invalid_argument("judge inputs must be non-empty");
    std::vector<ChatMessage> messages{
        {Role::system, system_prompt_},
        {Role::user, render(user_template_, {{"question", question},
                                             {"response", response},
                                             {"correct_answer", correct_answer}})}};
    SamplingParams params;
    params.temperature = 0.0;  // grading wants the mode, not a sample
    GenerationResult result = generation_->generate(messages, params);
    return parse_judge_reply(result.text);
}

}  // namespace zpd
