#pragma once

#include "zpd/jsonl.hpp"
#include "zpd/providers.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace zpd {

class PromptSet;

enum class Tool { search, scholar, browser, code };

const char* tool_name(Tool t);
std::optional<Tool> tool_from_name(const std::string& name);

struct ToolCall {
    Tool tool = Tool::search;
    Json arguments;  // search/scholar: {"query":[...]}; browser: {"url","goal"}; code: {"script"}
};

struct Observation {
    Tool tool = Tool::search;
    Json payload;  // present even on failure; failures carry {"error": "..."}
    long tokens_consumed = 0;
    bool error = false;
};

/// Raises std::invalid_argument describing the violation.
void validate_tool_call(const ToolCall& call);

/// Parse a {"name": ..., "arguments": ...} object into a schema-valid call.
std::optional<ToolCall> tool_call_from_json(const Json& j);
Json tool_call_to_json(const ToolCall& call);

struct CodeLimits {
    int wall_seconds = 30;
    std::int64_t memory_bytes = 512ll * 1024 * 1024;
};

struct ToolkitConfig {
    int results_per_query = 5;
    std::size_t payload_byte_cap = 16 * 1024;
    int batch_workers = 8;
    CodeLimits code_limits;
    std::string interpreter = "python3";
};

struct SearchResult {
    std::string title;
    std::string snippet;
    std::string url;
};

class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual std::vector<SearchResult> search(const std::string& query, int top_n) = 0;
};

struct FetchedPage {
    std::string content;
    std::optional<long> tokens;  // provider/fixture-reported; else estimated
};

class BrowserFetcher {
public:
    virtual ~BrowserFetcher() = default;
    virtual FetchedPage fetch(const std::string& url) = 0;
};

/// Keyed by fnv1a64(query) hex: <dir>/<hex>.json overrides; otherwise results
/// are synthesized deterministically from the same hash, so trajectories are
/// reproducible without network.
class FixtureSearchBackend : public SearchBackend {
public:
    explicit FixtureSearchBackend(std::string fixture_dir = "", std::uint64_t seed = 0)
        : dir_(std::move(fixture_dir)), seed_(seed) {}
    std::vector<SearchResult> search(const std::string& query, int top_n) override;

private:
    std::string dir_;
    std::uint64_t seed_;
};

/// Keyed by fnv1a64(url) hex: <dir>/<hex>.json with {"content": ..., "tokens"?: n}.
/// A URL without a fixture is a fetch failure.
class FixtureBrowserFetcher : public BrowserFetcher {
public:
    explicit FixtureBrowserFetcher(std::string fixture_dir) : dir_(std::move(fixture_dir)) {}
    FetchedPage fetch(const std::string& url) override;

private:
    std::string dir_;
};

class HttpSearchBackend : public SearchBackend {
public:
    HttpSearchBackend(std::string base_url, std::string api_key_env, RetryPolicy retry = {});
    std::vector<SearchResult> search(const std::string& query, int top_n) override;

private:
    std::string base_url_;
    std::string api_key_env_;
    RetryPolicy retry_;
};

/// Reader-endpoint fetcher: GET <reader_base>/<url> returns page text.
class HttpBrowserFetcher : public BrowserFetcher {
public:
    explicit HttpBrowserFetcher(std::string reader_base, RetryPolicy retry = {});
    FetchedPage fetch(const std::string& url) override;

private:
    std::string reader_base_;
    RetryPolicy retry_;
};

/// Runs scripts in an isolated interpreter subprocess: scratch working
/// directory, scrubbed environment, address-space limit, hard wall-clock
/// kill. stdout/stderr are captured verbatim and truncated at the byte cap.
/// Executions are serialized per runner instance.
class CodeRunner {
public:
    explicit CodeRunner(std::string interpreter = "python3", std::size_t capture_cap = 16 * 1024)
        : interpreter_(std::move(interpreter)), capture_cap_(capture_cap) {}

    Observation run(const std::string& script, const CodeLimits& limits);

private:
    std::string interpreter_;
    std::size_t capture_cap_;
    std::mutex mutex_;
};

/// The agent tool suite with batched dispatch and structured observations.
class Toolkit {
public:
    Toolkit(std::shared_ptr<SearchBackend> search, std::shared_ptr<SearchBackend> scholar,
            std::shared_ptr<BrowserFetcher> browser, std::shared_ptr<GenerationProvider> synthesizer,
            const PromptSet* prompts, ToolkitConfig config = {});

    /// Observations positionally aligned with calls; a failing or
    /// schema-invalid call yields an error observation without affecting the
    /// rest of the batch.
    std::vector<Observation> dispatch(std::span<const ToolCall> calls);

    Observation run_search(Tool which, const std::vector<std::string>& queries);
    Observation browse(const std::string& url, const std::string& goal);
    Observation run_code(const std::string& script);
    Observation run_code(const std::string& script, const CodeLimits& limits);

    const ToolkitConfig& config() const { return config_; }

private:
    Observation dispatch_one(const ToolCall& call);
    Json truncate_payload(Json payload) const;

    std::shared_ptr<SearchBackend> search_;
    std::shared_ptr<SearchBackend> scholar_;
    std::shared_ptr<BrowserFetcher> browser_;
    std::shared_ptr<GenerationProvider> synthesizer_;
    const PromptSet* prompts_;
    ToolkitConfig config_;
    CodeRunner code_runner_;
};

/// Rough chars/4 token estimate used when nothing better is reported.
long estimate_tokens(std::string_view text);

}  // namespace zpd
