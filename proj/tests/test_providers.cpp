#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "zpd/http_providers.hpp"
#include "zpd/mock_providers.hpp"
#include "zpd/providers.hpp"
#include "zpd/util.hpp"

#include "support/scripted.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <thread>

using namespace zpd;
using Json = nlohmann::json;

namespace {

std::vector<ChatMessage> simple_messages(const std::string& user) {
    return {{Role::system, "You are helpful."}, {Role::user, user}};
}

}  // namespace

TEST_CASE("mock generation is a pure function of its input") {
    MockGeneration gen(7);
    auto msgs = simple_messages("compare the two mechanisms");
    SamplingParams params;
    auto a = gen.generate(msgs, params);
    auto b = gen.generate(msgs, params);
    CHECK(a.text == b.text);
    CHECK(a.input_tokens == b.input_tokens);

    MockGeneration gen_same_seed(7);
    CHECK(gen_same_seed.generate(msgs, params).text == a.text);

    MockGeneration other_seed(8);
    CHECK(other_seed.generate(msgs, params).text != a.text);
}

TEST_CASE("empty message list is a precondition error") {
    MockGeneration gen(0);
    SamplingParams params;
    CHECK_THROWS_AS(gen.generate({}, params), std::invalid_argument);
}

TEST_CASE("message validation rejects consecutive assistant turns and empty content") {
    std::vector<ChatMessage> bad{{Role::assistant, "a"}, {Role::assistant, "b"}};
    CHECK_THROWS_AS(validate_messages(bad), std::invalid_argument);

    std::vector<ChatMessage> empty_user{{Role::user, "   "}};
    CHECK_THROWS_AS(validate_messages(empty_user), std::invalid_argument);

    std::vector<ChatMessage> ok{{Role::system, "s"},
                                {Role::user, "u"},
                                {Role::assistant, "a"},
                                {Role::tool, "obs"},
                                {Role::assistant, "a2"}};
    CHECK_NOTHROW(validate_messages(ok));
}

TEST_CASE("sampling defaults match the configured generation settings") {
    SamplingParams params;
    CHECK(params.temperature == doctest::Approx(0.6));
    CHECK(params.top_p == doctest::Approx(0.95));
    CHECK(params.max_tokens == 40960);
}

TEST_CASE("mock embeddings: identical inputs, unit norm, cosine matches a dot-product oracle") {
    MockEmbedding embedder(64, 3);
    std::vector<std::string> pair{"same text", "same text"};
    auto two = embedder.embed(pair);
    CHECK(two[0] == two[1]);

    std::vector<std::string> texts;
    DetRng rng(99);
    for (int i = 0; i < 100; ++i) {
        std::string t;
        for (int w = 0; w < 8; ++w) t += "w" + std::to_string(rng.uniform(40)) + " ";
        texts.push_back(t);
    }
    auto vectors = embedder.embed(texts);
    for (const auto& v : vectors) {
        double norm = 0;
        for (double x : v) norm += x * x;
        CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-6);
    }

    CHECK_THROWS_AS(embedder.embed(std::vector<std::string>{""}), std::invalid_argument);
}

TEST_CASE("mock rerank is the token-overlap coefficient") {
    MockRerank rerank;
    CHECK(rerank.rerank_similarity("alpha beta gamma", "alpha beta gamma") == doctest::Approx(1.0));
    CHECK(rerank.rerank_similarity("alpha beta", "delta epsilon") == doctest::Approx(0.0));
    // overlap {a,b} = 2, max set size 3
    CHECK(rerank.rerank_similarity("a b c", "a b d") == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(rerank.rerank_similarity("", "x"), std::invalid_argument);
}

TEST_CASE("mock judge applies strict normalized matching") {
    MockJudge judge;
    CHECK(judge.judge_correct("q", "42", "42").correct);
    CHECK(judge.judge_correct("q", "  42 ", "42").correct);
    CHECK(judge.judge_correct("q", "FORTY two", "forty  two").correct);
    CHECK_FALSE(judge.judge_correct("q", "42.0 approximately", "42").correct);
}

TEST_CASE("judge reply parsing: fixture fields, defaults, and failure modes") {
    std::string reply =
        "extracted_final_answer: 42\n"
        "reasoning: Matches the reference exactly.\n"
        "correct: yes\n"
        "confidence: 80%\n";
    JudgeVerdict v = parse_judge_reply(reply);
    CHECK(v.correct);
    CHECK(v.confidence == 80);
    REQUIRE(v.extracted_final_answer.has_value());
    CHECK(*v.extracted_final_answer == "42");

    JudgeVerdict none_marker = parse_judge_reply("extracted_final_answer: None\ncorrect: no\n");
    CHECK_FALSE(none_marker.extracted_final_answer.has_value());
    CHECK(none_marker.confidence == 100);  // absent defaults to 100

    CHECK_THROWS_AS(parse_judge_reply("reasoning: no verdict here\n"), JudgeParseError);
    CHECK_THROWS_AS(parse_judge_reply("correct: maybe\n"), JudgeParseError);

    try {
        parse_judge_reply("some raw reply without fields");
        FAIL("expected JudgeParseError");
    } catch (const JudgeParseError& e) {
        CHECK(e.raw_reply() == "some raw reply without fields");
    }
}

TEST_CASE("judge verdict round-trips through the reply shape") {
    DetRng rng(4242);
    for (int trial = 0; trial < 200; ++trial) {
        JudgeVerdict v;
        v.correct = rng.uniform(2) == 0;
        v.confidence = static_cast<int>(rng.uniform(101));
        v.reasoning = "reason " + std::to_string(rng.uniform(1000));
        if (rng.uniform(4) != 0)
            v.extracted_final_answer = "answer " + std::to_string(rng.uniform(1000));
        JudgeVerdict back = parse_judge_reply(serialize_judge_reply(v));
        CHECK(back.correct == v.correct);
        CHECK(back.confidence == v.confidence);
        CHECK(back.reasoning == v.reasoning);
        CHECK(back.extracted_final_answer == v.extracted_final_answer);
    }
}

TEST_CASE("retry policy: retryable failures are retried, others are not") {
    MockGeneration inner(1);
    SamplingParams params;
    auto msgs = simple_messages("hello");
    RetryPolicy fast{3, 0, 2.0};

    {
        zpd::test::FlakyGeneration flaky(inner, 2, true);
        auto result = with_retries(fast, [&] { return flaky.generate(msgs, params); });
        CHECK(result.text == inner.generate(msgs, params).text);
    }
    {
        zpd::test::FlakyGeneration flaky(inner, 4, true);  // more failures than retries
        CHECK_THROWS_AS(with_retries(fast, [&] { return flaky.generate(msgs, params); }),
                        ProviderError);
    }
    {
        zpd::test::FlakyGeneration flaky(inner, 1, false);  // non-retryable
        CHECK_THROWS_AS(with_retries(fast, [&] { return flaky.generate(msgs, params); }),
                        ProviderError);
    }
}

namespace {

struct TestServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~TestServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("http generation mirrors reported usage counts exactly") {
    TestServer ts;
    ts.server.Post("/v1/chat/completions", [](const httplib::Request& req,
                                              httplib::Response& res) {
        Json body = Json::parse(req.body);
        REQUIRE(body.contains("messages"));
        Json reply{{"choices", Json::array({Json{{"message", {{"content", "the answer"}}}}})},
                   {"usage", {{"prompt_tokens", 18614}, {"completion_tokens", 11643}}}};
        res.set_content(reply.dump(), "application/json");
    });
    ts.start();

    HttpGenerationProvider provider({ts.base_url() + "/v1", "test-model", "", {0, 0, 2.0}});
    auto result = provider.generate(simple_messages("q"), {});
    CHECK(result.text == "the answer");
    CHECK(result.input_tokens == 18614);
    CHECK(result.output_tokens == 11643);
    CHECK_FALSE(result.usage_estimated);
}

TEST_CASE("http generation: missing usage is estimated and flagged") {
    TestServer ts;
    ts.server.Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        Json reply{{"choices", Json::array({Json{{"message", {{"content", "ok"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    ts.start();

    HttpGenerationProvider provider({ts.base_url() + "/v1", "test-model", "", {0, 0, 2.0}});
    auto result = provider.generate(simple_messages("q"), {});
    CHECK(result.usage_estimated);
    CHECK(result.input_tokens > 0);
}

TEST_CASE("http generation retries rate limits and surfaces malformed replies") {
    TestServer ts;
    std::atomic<int> hits{0};
    ts.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (hits.fetch_add(1) < 2) {
            res.status = 429;
            return;
        }
        Json reply{{"choices", Json::array({Json{{"message", {{"content", "recovered"}}}}})},
                   {"usage", {{"prompt_tokens", 1}, {"completion_tokens", 1}}}};
        res.set_content(reply.dump(), "application/json");
    });
    ts.server.Post("/bad/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json at all", "text/plain");
    });
    ts.start();

    HttpGenerationProvider provider({ts.base_url() + "/v1", "m", "", {3, 0, 2.0}});
    CHECK(provider.generate(simple_messages("q"), {}).text == "recovered");
    CHECK(hits.load() == 3);

    HttpGenerationProvider bad({ts.base_url() + "/bad", "m", "", {1, 0, 2.0}});
    CHECK_THROWS_AS(bad.generate(simple_messages("q"), {}), ProviderError);
}

TEST_CASE("http embeddings are renormalized and batch dimension-checked") {
    TestServer ts;
    ts.server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
        Json body = Json::parse(req.body);
        Json data = Json::array();
        for (std::size_t i = 0; i < body["input"].size(); ++i)
            data.push_back({{"embedding", std::vector<double>{3.0, 4.0, 0.0}}});
        res.set_content(Json{{"data", data}}.dump(), "application/json");
    });
    ts.server.Post("/mismatch/embeddings", [](const httplib::Request&, httplib::Response& res) {
        Json data = Json::array();
        data.push_back({{"embedding", std::vector<double>{1.0, 0.0}}});
        data.push_back({{"embedding", std::vector<double>{1.0, 0.0, 0.0}}});
        res.set_content(Json{{"data", data}}.dump(), "application/json");
    });
    ts.start();

    HttpEmbeddingProvider provider({ts.base_url() + "/v1", "m", "", {0, 0, 2.0}});
    auto vectors = provider.embed(std::vector<std::string>{"a", "b"});
    REQUIRE(vectors.size() == 2);
    CHECK(vectors[0][0] == doctest::Approx(0.6));
    CHECK(vectors[0][1] == doctest::Approx(0.8));

    HttpEmbeddingProvider mismatch({ts.base_url() + "/mismatch", "m", "", {0, 0, 2.0}});
    CHECK_THROWS_AS(mismatch.embed(std::vector<std::string>{"a", "b"}), ProviderError);
}

TEST_CASE("http rerank parses and clamps the relevance score") {
    TestServer ts;
    ts.server.Post("/v1/rerank", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(Json{{"results", Json::array({Json{{"relevance_score", 1.7}}})}}.dump(),
                        "application/json");
    });
    ts.server.Post("/none/rerank", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(Json{{"results", Json::array()}}.dump(), "application/json");
    });
    ts.start();

    HttpRerankProvider provider({ts.base_url() + "/v1", "m", "", {0, 0, 2.0}});
    CHECK(provider.rerank_similarity("q", "c") == doctest::Approx(1.0));  // clamped

    HttpRerankProvider none({ts.base_url() + "/none", "m", "", {0, 0, 2.0}});
    CHECK_THROWS_AS(none.rerank_similarity("q", "c"), ProviderError);
}

TEST_CASE("prompt judge renders the grading prompt and parses the reply") {
    auto scripted = std::make_shared<zpd::test::ScriptedGeneration>(
        [](std::span<const ChatMessage> messages) -> std::string {
            std::string user = messages.back().content;
            REQUIRE(user.find("what is 6x7") != std::string::npos);
            REQUIRE(user.find("the answer is 42") != std::string::npos);
            REQUIRE(user.find("[correct_answer]: 42") != std::string::npos);
            return "extracted_final_answer: 42\nreasoning: equal\ncorrect: yes\nconfidence: 90\n";
        });
    PromptJudgeProvider judge(scripted, PromptSet::embedded_defaults());
    JudgeVerdict v = judge.judge_correct("what is 6x7", "the answer is 42", "42");
    CHECK(v.correct);
    CHECK(v.confidence == 90);
}
