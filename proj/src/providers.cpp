#include "zpd/providers.hpp"

#include "zpd/util.hpp"

#include <chrono>
#include <sstream>
#include <thread>

namespace zpd {

const char* role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "user";
}

Role role_from_name(const std::string& name) {
    if (name == "system") return Role::system;
    if (name == "user") return Role::user;
    if (name == "assistant") return Role::assistant;
    if (name == "tool") return Role::tool;
    throw std::invalid_argument("unknown chat role: " + name);
}

void sleep_ms(long ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }

void validate_messages(std::span<const ChatMessage> messages) {
    if (messages.empty()) throw std::invalid_argument("messages must be non-empty");
    bool prev_assistant = false;
    for (const auto& m : messages) {
        if ((m.role == Role::user || m.role == Role::system) && trim(m.content).empty())
            throw std::invalid_argument("user/system message content must be non-empty");
        if (m.role == Role::assistant) {
            if (prev_assistant)
                throw std::invalid_argument("two consecutive assistant messages");
            prev_assistant = true;
        } else {
            prev_assistant = false;
        }
    }
}

namespace {

// Returns the value of "key:" on the line starting at `pos`, or nullopt.
std::optional<std::string> field_after(const std::string& text, const std::string& key) {
    std::size_t pos = 0;
    std::optional<std::string> last;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        std::string lowered = to_lower(line);
        std::size_t at = lowered.find(key);
        // Accept the field only at line start (after optional markup chars).
        if (at != std::string::npos && at <= 2) {
            last = trim(line.substr(at + key.size()));
        }
        pos = eol + 1;
    }
    return last;
}

}  // namespace

JudgeVerdict parse_judge_reply(const std::string& reply) {
    JudgeVerdict v;

    auto correct_raw = field_after(reply, "correct:");
    if (!correct_raw)
        throw JudgeParseError("judge reply missing 'correct:' field", reply);
    std::string yn = to_lower(trim(*correct_raw));
    while (!yn.empty() && (yn.back() == '.' || yn.back() == '!')) yn.pop_back();
    if (yn == "yes") {
        v.correct = true;
    } else if (yn == "no") {
        v.correct = false;
    } else {
        throw JudgeParseError("judge 'correct:' field is not yes/no: " + yn, reply);
    }

    if (auto extracted = field_after(reply, "extracted_final_answer:")) {
        std::string val = trim(*extracted);
        if (to_lower(val) == "none" || to_lower(val) == "'none'")
            v.extracted_final_answer = std::nullopt;
        else
            v.extracted_final_answer = val;
    }
    if (auto reasoning = field_after(reply, "reasoning:")) v.reasoning = *reasoning;

    v.confidence = 100;
    if (auto conf = field_after(reply, "confidence:")) {
        std::string c = trim(*conf);
        if (!c.empty() && c.back() == '%') c.pop_back();
        c = trim(c);
        try {
            int parsed = std::stoi(c);
            if (parsed >= 0 && parsed <= 100) v.confidence = parsed;
        } catch (const std::exception&) {
            // absent/garbled confidence keeps the default of 100
        }
    }
    return v;
}

std::string serialize_judge_reply(const JudgeVerdict& verdict) {
    std::ostringstream out;
    out << "extracted_final_answer: "
        << (verdict.extracted_final_answer ? *verdict.extracted_final_answer : std::string("None"))
        << "\n";
    out << "reasoning: " << verdict.reasoning << "\n";
    out << "correct: " << (verdict.correct ? "yes" : "no") << "\n";
    out << "confidence: " << verdict.confidence << "\n";
    return out.str();
}

}  // namespace zpd
