#include "zpd/prompts.hpp"

#include "zpd/util.hpp"

#include <array>
#include <filesystem>
#include <sstream>
#include <stdexcept>

namespace zpd {

namespace {

const char* kAgentTooled = R"(You are a research agent working in rounds. Each round, write a reasoning
report: summarize the evidence gathered so far, assess progress on the
research question, and decide the next action.

Available tools: search, scholar, browser, code.
To call a tool, end your reply with exactly one JSON object on its own line:
{"name": "<tool>", "arguments": {...}}
- search / scholar arguments: {"query": ["<query>", ...]}
- browser arguments: {"url": "<url>", "goal": "<what to extract>"}
- code arguments: {"script": "<python source>"}

When you have enough evidence to answer, end your reply with one line:
Final Answer: <your answer>
)";

const char* kAgentUntooled = R"(You are a reasoning assistant working without any tools, answering from your
own knowledge. Work in rounds: write a short reasoning report, and when
ready, end your reply with one line:
Final Answer: <your answer>
)";

const char* kChunkerSystem = R"(You are the document chunker. Clean the document below: drop HTML tags and
boilerplate, keep every substantive fact, and condense the text into
self-contained, information-dense chunks of roughly 200-500 words. Output the
chunks in order, separated by a line containing only ---.
)";

const char* kChunkerUser = R"([DOCUMENT]
{{body}})";

const char* kSeedSystem = R"(You are the seed question writer. You receive three thematically related
excerpts. Write one question whose answer requires combining information from
all three excerpts, together with its answer. Reply with only a JSON object:
{"question": "...", "answer": "..."}
)";

const char* kSeedUser = R"([CHUNK 1]
{{chunk1}}

[CHUNK 2]
{{chunk2}}

[CHUNK 3]
{{chunk3}})";

const char* kRefineSystem = R"(You are a research agent working in rounds, acting as the iterative refinement agent.
Your mission: transform the question-answer pair below into a more complex,
deeper, better-grounded pair. Raise its difficulty along one or more of these
dimensions, and record which you used:
- knowledge_expansion: pull in relevant external background that widens the
  question's informational scope.
- conceptual_abstraction: lift the question to higher-level principles or
  subtle relationships between the underlying concepts.
- factual_grounding: cross-validate the facts across sources and add precise,
  verifiable detail.
- computational_formulation: recast the problem so answering it requires a
  quantitative calculation or simulation, using the code tool.

Available tools: search, scholar, browser, code.
To call a tool, end your reply with exactly one JSON object on its own line:
{"name": "<tool>", "arguments": {...}}
- search / scholar arguments: {"query": ["<query>", ...]}
- browser arguments: {"url": "<url>", "goal": "<what to extract>"}
- code arguments: {"script": "<python source>"}

When the refined pair is ready, end your reply with:
Final Answer: {"question": "...", "answer": "...", "dimensions": ["..."]}
The final answer must be only that JSON object.
)";

const char* kRefineUser = R"([CURRENT PAIR]
{{pair_json}})";

const char* kJudgeSystem = R"(You are a strict grader. Judge whether a candidate response answers a
question correctly, comparing only against the reference answer. Reject on
any inconsistency, ambiguity, or non-equivalence.
)";

const char* kJudgeUser = R"(Grade the response against the reference answer.

[question]: {{question}}
[response]: {{response}}
[correct_answer]: {{correct_answer}}

Reply with exactly these fields, one per line:
extracted_final_answer: <the exact final answer extracted from the response, or None>
reasoning: <why the extracted answer does or does not match the reference>
correct: <yes or no>
confidence: <the confidence stated in the response, 0-100; 100 if none>
)";

const char* kBrowserSynth = R"(Extract what the goal asks for from the page content below. Reply with a
concise answer grounded only in the page content.

[GOAL]
{{goal}}

[PAGE CONTENT]
{{content}})";

}  // namespace

PromptSet PromptSet::embedded_defaults() {
    PromptSet p;
    p.set("agent_system_tooled", kAgentTooled);
    p.set("agent_system_untooled", kAgentUntooled);
    p.set("chunker_system", kChunkerSystem);
    p.set("chunker_user", kChunkerUser);
    p.set("seed_system", kSeedSystem);
    p.set("seed_user", kSeedUser);
    p.set("refine_system", kRefineSystem);
    p.set("refine_user", kRefineUser);
    p.set("judge_system", kJudgeSystem);
    p.set("judge_user", kJudgeUser);
    p.set("browser_synth", kBrowserSynth);
    return p;
}

PromptSet PromptSet::load(const std::string& dir) {
    namespace fs = std::filesystem;
    PromptSet p = embedded_defaults();
    if (!fs::is_directory(dir)) throw std::runtime_error("prompt directory not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        p.set(entry.path().stem().string(), read_file(entry.path().string()));
    }
    return p;
}

const std::string& PromptSet::get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw std::runtime_error("unknown prompt template: " + name);
    return it->second;
}

bool PromptSet::has(const std::string& name) const { return templates_.count(name) != 0; }

void PromptSet::set(std::string name, std::string text) {
    templates_[std::move(name)] = std::move(text);
}

std::string PromptSet::revision() const {
    std::ostringstream all;
    for (const auto& [name, text] : templates_) all << name << '\0' << text << '\0';
    return sha256_hex(all.str()).substr(0, 16);
}

std::string render(std::string tmpl,
                   const std::vector<std::pair<std::string, std::string>>& vars) {
    for (const auto& [key, value] : vars) {
        std::string needle = "{{" + key + "}}";
        std::size_t pos = 0;
        while ((pos = tmpl.find(needle, pos)) != std::string::npos) {
            tmpl.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return tmpl;
}

std::optional<std::string> find_section(const std::string& text, const std::string& header) {
    static const std::array<const char*, 8> kHeaders = {
        marker::question_header,  marker::prev_report_header, marker::prev_obs_header,
        marker::document_section, marker::chunk_section_1,    marker::chunk_section_2,
        marker::chunk_section_3,  marker::pair_section,
    };
    std::size_t at = text.find(header);
    if (at == std::string::npos) return std::nullopt;
    std::size_t body_start = at + header.size();
    if (body_start < text.size() && text[body_start] == '\n') ++body_start;
    std::size_t end = text.size();
    for (const char* h : kHeaders) {
        if (h == header) continue;
        std::size_t p = text.find(h, body_start);
        if (p != std::string::npos && p < end) end = p;
    }
    return trim(text.substr(body_start, end - body_start));
}

}  // namespace zpd
