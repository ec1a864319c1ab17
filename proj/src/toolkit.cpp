#include "zpd/toolkit.hpp"

#include "zpd/prompts.hpp"
#include "zpd/util.hpp"

#include "http_util.hpp"

#include <atomic>
#include <cctype>
#include <filesystem>
#include <thread>

namespace zpd {

const char* tool_name(Tool t) {
    switch (t) {
        case Tool::search: return "search";
        case Tool::scholar: return "scholar";
        case Tool::browser: return "browser";
        case Tool::code: return "code";
    }
    return "search";
}

std::optional<Tool> tool_from_name(const std::string& name) {
    if (name == "search" || name == "google_search") return Tool::search;
    if (name == "scholar" || name == "google_scholar") return Tool::scholar;
    if (name == "browser") return Tool::browser;
    if (name == "code" || name == "python") return Tool::code;
    return std::nullopt;
}

long estimate_tokens(std::string_view text) {
    return static_cast<long>((text.size() + 3) / 4);
}

namespace {

std::vector<std::string> query_list(const Json& arguments) {
    if (!arguments.is_object() || !arguments.contains("query"))
        throw std::invalid_argument("search/scholar arguments require a \"query\" field");
    const Json& q = arguments["query"];
    std::vector<std::string> queries;
    if (q.is_string()) {
        queries.push_back(q.get<std::string>());
    } else if (q.is_array()) {
        for (const auto& item : q) {
            if (!item.is_string())
                throw std::invalid_argument("\"query\" entries must be strings");
            queries.push_back(item.get<std::string>());
        }
    } else {
        throw std::invalid_argument("\"query\" must be a string or list of strings");
    }
    if (queries.empty()) throw std::invalid_argument("\"query\" must be non-empty");
    for (const auto& s : queries)
        if (trim(s).empty()) throw std::invalid_argument("empty query string");
    return queries;
}

bool url_is_valid(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || scheme_end == 0) return false;
    for (std::size_t i = 0; i < scheme_end; ++i)
        if (!std::isalpha(static_cast<unsigned char>(url[i]))) return false;
    return url.size() > scheme_end + 3;
}

}  // namespace

void validate_tool_call(const ToolCall& call) {
    switch (call.tool) {
        case Tool::search:
        case Tool::scholar:
            query_list(call.arguments);
            return;
        case Tool::browser: {
            if (!call.arguments.is_object() || !call.arguments.contains("url") ||
                !call.arguments["url"].is_string())
                throw std::invalid_argument("browser arguments require a string \"url\"");
            if (!url_is_valid(call.arguments["url"].get<std::string>()))
                throw std::invalid_argument("malformed url: " +
                                            call.arguments["url"].dump());
            if (!call.arguments.contains("goal") || !call.arguments["goal"].is_string() ||
                trim(call.arguments["goal"].get<std::string>()).empty())
                throw std::invalid_argument("browser arguments require a non-empty \"goal\"");
            return;
        }
        case Tool::code: {
            if (!call.arguments.is_object() || !call.arguments.contains("script") ||
                !call.arguments["script"].is_string() ||
                trim(call.arguments["script"].get<std::string>()).empty())
                throw std::invalid_argument("code arguments require a non-empty \"script\"");
            return;
        }
    }
    throw std::invalid_argument("unknown tool");
}

std::optional<ToolCall> tool_call_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string() ||
        !j.contains("arguments"))
        return std::nullopt;
    auto tool = tool_from_name(j["name"].get<std::string>());
    if (!tool) return std::nullopt;
    ToolCall call{*tool, j["arguments"]};
    validate_tool_call(call);
    return call;
}

Json tool_call_to_json(const ToolCall& call) {
    return Json{{"name", tool_name(call.tool)}, {"arguments", call.arguments}};
}

std::vector<SearchResult> FixtureSearchBackend::search(const std::string& query, int top_n) {
    std::uint64_t h = fnv1a64(query);
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));

    if (!dir_.empty()) {
        auto path = std::filesystem::path(dir_) / (std::string(hex) + ".json");
        if (std::filesystem::exists(path)) {
            Json j = Json::parse(read_file(path.string()));
            std::vector<SearchResult> out;
            for (const auto& r : j.at("results")) {
                out.push_back({r.value("title", ""), r.value("snippet", ""), r.value("url", "")});
                if (static_cast<int>(out.size()) == top_n) break;
            }
            return out;
        }
    }

    // No fixture file: synthesize stable results from the query hash.
    std::vector<SearchResult> out;
    for (int i = 0; i < top_n; ++i) {
        std::uint64_t s = splitmix64(h ^ seed_ ^ static_cast<std::uint64_t>(i) * 0x9e37u);
        char sh[17];
        std::snprintf(sh, sizeof(sh), "%016llx", static_cast<unsigned long long>(s));
        SearchResult r;
        r.title = "Result " + std::to_string(i + 1) + " for: " + query;
        r.snippet = "Fixture snippet " + std::string(sh) + " covering " + query + ".";
        r.url = "https://fixture.local/" + std::string(hex) + "/" + std::to_string(i);
        out.push_back(std::move(r));
    }
    return out;
}

FetchedPage FixtureBrowserFetcher::fetch(const std::string& url) {
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv1a64(url)));
    auto path = std::filesystem::path(dir_) / (std::string(hex) + ".json");
    if (!std::filesystem::exists(path))
        throw ProviderError("no browser fixture for url: " + url + " (expected " + path.string() +
                                ")",
                            false);
    Json j = Json::parse(read_file(path.string()));
    FetchedPage page;
    page.content = j.at("content").get<std::string>();
    if (j.contains("tokens")) page.tokens = j["tokens"].get<long>();
    return page;
}

HttpSearchBackend::HttpSearchBackend(std::string base_url, std::string api_key_env,
                                     RetryPolicy retry)
    : base_url_(std::move(base_url)), api_key_env_(std::move(api_key_env)), retry_(retry) {}

std::vector<SearchResult> HttpSearchBackend::search(const std::string& query, int top_n) {
    detail::Headers headers;
    if (!api_key_env_.empty()) {
        if (auto key = getenv_opt(api_key_env_))
            headers.emplace_back("Authorization", "Bearer " + *key);
    }
    Json body{{"q", query}, {"num", top_n}};
    auto res = with_retries(retry_, [&] {
        return detail::http_post_json(base_url_, body.dump(), headers);
    });
    Json j = Json::parse(res.body, nullptr, false);
    if (j.is_discarded() || !j.contains("results"))
        throw ProviderError("malformed search response from " + base_url_, false);
    std::vector<SearchResult> out;
    for (const auto& r : j["results"]) {
        out.push_back({r.value("title", ""), r.value("snippet", ""), r.value("url", "")});
        if (static_cast<int>(out.size()) == top_n) break;
    }
    return out;
}

HttpBrowserFetcher::HttpBrowserFetcher(std::string reader_base, RetryPolicy retry)
    : reader_base_(std::move(reader_base)), retry_(retry) {}

FetchedPage HttpBrowserFetcher::fetch(const std::string& url) {
    std::string full = reader_base_;
    if (!full.empty() && full.back() != '/') full += '/';
    full += url;
    auto res = with_retries(retry_, [&] { return detail::http_get(full, {}); });
    return {res.body, std::nullopt};
}

Toolkit::Toolkit(std::shared_ptr<SearchBackend> search, std::shared_ptr<SearchBackend> scholar,
                 std::shared_ptr<BrowserFetcher> browser,
                 std::shared_ptr<GenerationProvider> synthesizer, const PromptSet* prompts,
                 ToolkitConfig config)
    : search_(std::move(search)),
      scholar_(std::move(scholar)),
      browser_(std::move(browser)),
      synthesizer_(std::move(synthesizer)),
      prompts_(prompts),
      config_(config),
      code_runner_(config.interpreter, config.payload_byte_cap) {}

Json Toolkit::truncate_payload(Json payload) const {
    std::string dumped = payload.dump();
    if (dumped.size() <= config_.payload_byte_cap) return payload;
    // Structure-preserving cap: truncate the dump and wrap it.
    return Json{{"truncated", true},
                {"payload_prefix", dumped.substr(0, config_.payload_byte_cap)}};
}

Observation Toolkit::run_search(Tool which, const std::vector<std::string>& queries) {
    SearchBackend& backend = (which == Tool::scholar) ? *scholar_ : *search_;
    Json payload = Json::array();
    for (const auto& q : queries) {
        try {
            Json results = Json::array();
            for (const auto& r : backend.search(q, config_.results_per_query))
                results.push_back({{"title", r.title}, {"snippet", r.snippet}, {"url", r.url}});
            payload.push_back({{"query", q}, {"results", results}});
        } catch (const std::exception& e) {
            payload.push_back({{"query", q}, {"error", e.what()}});
        }
    }
    Observation obs{which, truncate_payload(payload), 0, false};
    obs.tokens_consumed = estimate_tokens(obs.payload.dump());
    return obs;
}

Observation Toolkit::browse(const std::string& url, const std::string& goal) {
    if (!url_is_valid(url)) throw std::invalid_argument("malformed url: " + url);
    if (trim(goal).empty()) throw std::invalid_argument("goal must be non-empty");

    FetchedPage page;
    try {
        page = browser_->fetch(url);
    } catch (const std::exception& e) {
        return {Tool::browser, Json{{"error", std::string("fetch failed: ") + e.what()}}, 0, true};
    }
    long tokens = page.tokens ? *page.tokens : estimate_tokens(page.content);

    if (!synthesizer_ || !prompts_) {
        Observation obs{Tool::browser, Json{{"answer", page.content}}, tokens, false};
        obs.payload = truncate_payload(obs.payload);
        return obs;
    }
    try {
        std::vector<ChatMessage> messages{
            {Role::user, render(prompts_->get("browser_synth"),
                                {{"goal", goal}, {"content", page.content}})}};
        SamplingParams params;
        auto result = synthesizer_->generate(messages, params);
        Observation obs{Tool::browser, Json{{"answer", result.text}}, tokens, false};
        obs.payload = truncate_payload(obs.payload);
        return obs;
    } catch (const std::exception& e) {
        std::string excerpt = page.content.substr(0, std::min<std::size_t>(page.content.size(),
                                                                           config_.payload_byte_cap));
        Observation obs{Tool::browser,
                        Json{{"answer", excerpt},
                             {"warning", std::string("synthesis failed: ") + e.what()}},
                        tokens, false};
        return obs;
    }
}

Observation Toolkit::run_code(const std::string& script) {
    return run_code(script, config_.code_limits);
}

Observation Toolkit::run_code(const std::string& script, const CodeLimits& limits) {
    return code_runner_.run(script, limits);
}

Observation Toolkit::dispatch_one(const ToolCall& call) {
    try {
        validate_tool_call(call);
        switch (call.tool) {
            case Tool::search:
            case Tool::scholar:
                return run_search(call.tool, query_list(call.arguments));
            case Tool::browser:
                return browse(call.arguments["url"].get<std::string>(),
                              call.arguments["goal"].get<std::string>());
            case Tool::code:
                return run_code(call.arguments["script"].get<std::string>());
        }
        throw std::invalid_argument("unknown tool");
    } catch (const std::exception& e) {
        return {call.tool, Json{{"error", e.what()}}, 0, true};
    }
}

std::vector<Observation> Toolkit::dispatch(std::span<const ToolCall> calls) {
    std::vector<Observation> out(calls.size());
    int workers = std::min<int>(config_.batch_workers, static_cast<int>(calls.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < calls.size(); ++i) out[i] = dispatch_one(calls[i]);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= calls.size()) return;
                out[i] = dispatch_one(calls[i]);
            }
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace zpd
