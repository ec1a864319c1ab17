#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace zpd {

/// Named prompt templates. Defaults are compiled in; a directory of *.txt
/// files (one per template name) overrides them, so prompt text is versioned
/// alongside the run manifest via revision().
class PromptSet {
public:
    static PromptSet embedded_defaults();
    /// Defaults plus overrides from <dir>/<name>.txt.
    static PromptSet load(const std::string& dir);

    const std::string& get(const std::string& name) const;
    bool has(const std::string& name) const;
    void set(std::string name, std::string text);

    /// Content hash over all templates (order-independent).
    std::string revision() const;

private:
    std::map<std::string, std::string> templates_;
};

/// Replace {{key}} placeholders.
std::string render(std::string tmpl,
                   const std::vector<std::pair<std::string, std::string>>& vars);

// Section headers and markers shared by prompt templates, the agent loop's
// round serialization, and the deterministic mock providers that route on
// them.
namespace marker {
inline constexpr const char* question_header = "Research question:";
inline constexpr const char* prev_report_header = "Previous report:";
inline constexpr const char* prev_obs_header = "Previous observations:";
inline constexpr const char* final_answer = "Final Answer:";
inline constexpr const char* document_section = "[DOCUMENT]";
inline constexpr const char* chunk_section_1 = "[CHUNK 1]";
inline constexpr const char* chunk_section_2 = "[CHUNK 2]";
inline constexpr const char* chunk_section_3 = "[CHUNK 3]";
inline constexpr const char* pair_section = "[CURRENT PAIR]";
inline constexpr const char* goal_section = "[GOAL]";
inline constexpr const char* page_content_section = "[PAGE CONTENT]";
inline constexpr const char* chunker_role = "document chunker";
inline constexpr const char* seed_role = "seed question writer";
inline constexpr const char* refine_role = "iterative refinement agent";
inline constexpr const char* tooled_agent_role = "research agent working in rounds";
inline constexpr const char* untooled_agent_role = "without any tools";
inline constexpr const char* chunk_separator = "---";
}  // namespace marker

/// Extract the body of a "Header:\n...body..." section, ending at the next
/// known section header or end of text. Used by mocks and tests to read the
/// structured prompts back.
std::optional<std::string> find_section(const std::string& text, const std::string& header);

}  // namespace zpd
