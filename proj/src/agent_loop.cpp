#include "zpd/agent_loop.hpp"

#include "zpd/util.hpp"

#include <sstream>

namespace zpd {

std::map<Tool, long> Trajectory::tool_call_counts() const {
    std::map<Tool, long> counts;
    for (const auto& r : rounds)
        for (const auto& c : r.tool_calls) ++counts[c.tool];
    return counts;
}

long Trajectory::total_input_tokens() const {
    long total = 0;
    for (const auto& r : rounds) total += r.input_tokens;
    return total;
}

long Trajectory::total_output_tokens() const {
    long total = 0;
    for (const auto& r : rounds) total += r.output_tokens;
    return total;
}

RoundSegments make_round_segments(const std::string& question, const std::string& prev_report,
                                  const std::string& prev_obs_text) {
    RoundSegments seg;
    seg.question = std::string(marker::question_header) + "\n" + question + "\n";
    if (!prev_report.empty())
        seg.prev_report = "\n" + std::string(marker::prev_report_header) + "\n" + prev_report + "\n";
    if (!prev_obs_text.empty())
        seg.prev_observation =
            "\n" + std::string(marker::prev_obs_header) + "\n" + prev_obs_text + "\n";
    return seg;
}

std::string serialize_observations(std::span<const Observation> observations) {
    std::ostringstream out;
    for (std::size_t i = 0; i < observations.size(); ++i) {
        const Observation& o = observations[i];
        if (i > 0) out << "\n";
        out << "[" << tool_name(o.tool) << " observation] " << o.payload.dump();
    }
    return out.str();
}

std::string round_observation_text(const Round& round) {
    if (!round.observations.empty()) return serialize_observations(round.observations);
    return round.refusal_note;
}

ParsedRoundOutput parse_round_output(const std::string& text) {
    ParsedRoundOutput parsed;

    // A tool call is one JSON object with "name"/"arguments" ending the
    // reply. Scan '{' positions from the end: the first position whose
    // suffix parses as a single JSON value is the outermost final object.
    // The scan is bounded; a protocol-following reply ends with the object,
    // so deep positions only occur in brace-heavy prose.
    int scan_budget = 64;
    std::size_t scan_end = text.size();
    for (std::size_t pos = text.rfind('{', scan_end);
         pos != std::string::npos && scan_budget-- > 0;
         pos = (pos == 0 ? std::string::npos : text.rfind('{', pos - 1))) {
        Json j = Json::parse(text.substr(pos), nullptr, false);
        if (j.is_discarded() || !j.is_object()) continue;
        if (j.contains("name") && j.contains("arguments")) {
            try {
                parsed.tool_call = tool_call_from_json(j);
                if (!parsed.tool_call) parsed.malformed_tool_call = true;
            } catch (const std::exception&) {
                parsed.malformed_tool_call = true;
            }
        }
        break;  // outermost trailing object found; nothing further left to try
    }
    if (parsed.tool_call) return parsed;

    std::size_t at = ifind(text, marker::final_answer);
    if (at != std::string::npos) {
        // Take the last occurrence so reports may mention the marker early.
        std::size_t last = at;
        for (;;) {
            std::size_t next = ifind(text.substr(last + 1), marker::final_answer);
            if (next == std::string::npos) break;
            last = last + 1 + next;
        }
        parsed.final_answer = trim(text.substr(last + std::string(marker::final_answer).size()));
        return parsed;
    }

    if (!parsed.malformed_tool_call && text.find("\"name\"") != std::string::npos &&
        text.find('{') != std::string::npos)
        parsed.malformed_tool_call = true;
    return parsed;
}

namespace {

constexpr const char* kNoToolsObservation =
    "[tool refusal] No tools are available to this agent; answer from your own knowledge.";

constexpr const char* kRepromptNote =
    "Your previous tool call was malformed. Emit exactly one valid JSON object "
    "of the form {\"name\": ..., \"arguments\": ...}, or give a final answer.";

}  // namespace

Trajectory run_trajectory(const std::string& question, const AgentConfig& cfg,
                          GenerationProvider& provider, Toolkit* tools, const RetryPolicy& retry,
                          TrajectoryHooks* hooks) {
    if (trim(question).empty()) throw std::invalid_argument("question must be non-empty");
    if (cfg.max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
    if (cfg.tools_enabled && tools == nullptr)
        throw std::invalid_argument("tools_enabled config needs a toolkit");

    Trajectory traj;
    traj.question = question;

    std::string prev_report;
    std::string prev_obs_text;
    std::vector<ChatMessage> history;  // only used with full_history

    for (int round_index = 1; round_index <= cfg.max_rounds; ++round_index) {
        RoundSegments segments = make_round_segments(question, prev_report, prev_obs_text);

        std::vector<ChatMessage> messages;
        messages.push_back({Role::system, cfg.system_prompt});
        if (cfg.full_history) {
            for (const auto& m : history) messages.push_back(m);
            messages.push_back({Role::user, round_index == 1
                                                ? segments.user_message()
                                                : "\n" + std::string(marker::prev_obs_header) +
                                                      "\n" + prev_obs_text + "\n"});
        } else {
            messages.push_back({Role::user, segments.user_message()});
        }

        auto call_provider = [&](const std::vector<ChatMessage>& msgs) {
            if (hooks && hooks->on_prompt) hooks->on_prompt(msgs);
            ++traj.llm_calls;
            return with_retries(retry, [&] { return provider.generate(msgs, cfg.sampling); });
        };

        Round round;
        round.index = round_index;
        GenerationResult gen;
        try {
            gen = call_provider(messages);
        } catch (const std::exception& e) {
            traj.aborted = true;
            if (hooks && hooks->log) hooks->log(std::string("round aborted: ") + e.what());
            break;
        }
        round.input_tokens = gen.input_tokens;
        round.output_tokens = gen.output_tokens;
        traj.usage_estimated = traj.usage_estimated || gen.usage_estimated;
        round.report = gen.text;

        ParsedRoundOutput parsed = parse_round_output(gen.text);
        if (parsed.malformed_tool_call) {
            // One reprompt; if that fails too the round is a no-op report.
            auto reprompt = messages;
            reprompt.push_back({Role::assistant, gen.text});
            reprompt.push_back({Role::user, kRepromptNote});
            try {
                GenerationResult retry_gen = call_provider(reprompt);
                round.input_tokens += retry_gen.input_tokens;
                round.output_tokens += retry_gen.output_tokens;
                traj.usage_estimated = traj.usage_estimated || retry_gen.usage_estimated;
                ParsedRoundOutput second = parse_round_output(retry_gen.text);
                if (second.tool_call || second.final_answer) {
                    round.report = retry_gen.text;
                    parsed = second;
                }
            } catch (const std::exception& e) {
                traj.aborted = true;
                traj.rounds.push_back(std::move(round));
                if (hooks && hooks->log) hooks->log(std::string("reprompt aborted: ") + e.what());
                break;
            }
        }

        if (parsed.tool_call && !cfg.tools_enabled) {
            ++traj.tool_refusals;
            if (hooks && hooks->log)
                hooks->log("refused " + std::string(tool_name(parsed.tool_call->tool)) +
                           " request: tools disabled for agent " + cfg.name);
            round.refusal_note = kNoToolsObservation;
            prev_report = round.report;
            prev_obs_text = round.refusal_note;
            traj.rounds.push_back(std::move(round));
            if (cfg.full_history) {
                history.push_back({Role::assistant, prev_report});
            }
            continue;
        }

        if (parsed.tool_call) {
            round.tool_calls.push_back(*parsed.tool_call);
            round.observations = tools->dispatch(round.tool_calls);
            traj.rounds.push_back(round);
            prev_report = round.report;
            prev_obs_text = serialize_observations(round.observations);
            if (cfg.full_history) {
                history.push_back({Role::assistant, round.report});
                history.push_back({Role::tool, prev_obs_text});
            }
            continue;
        }

        if (parsed.final_answer) {
            round.is_final = true;
            round.final_answer = parsed.final_answer;
            traj.rounds.push_back(std::move(round));
            traj.final_answer = parsed.final_answer;
            return traj;
        }

        // No-op report round: no tool call, no final answer.
        traj.rounds.push_back(round);
        prev_report = round.report;
        prev_obs_text.clear();
        if (cfg.full_history) history.push_back({Role::assistant, round.report});
    }

    return traj;  // max_rounds exhausted or aborted; final_answer absent
}

std::optional<std::string> extract_final_answer(const Trajectory& traj) {
    if (traj.rounds.empty()) return std::nullopt;
    const Round& last = traj.rounds.back();
    if (!last.is_final) return std::nullopt;
    return last.final_answer;
}

Json trajectory_to_json(const Trajectory& traj) {
    Json rounds = Json::array();
    for (const auto& r : traj.rounds) {
        Json calls = Json::array();
        for (const auto& c : r.tool_calls) calls.push_back(tool_call_to_json(c));
        Json obs = Json::array();
        for (const auto& o : r.observations)
            obs.push_back({{"tool", tool_name(o.tool)},
                           {"payload", o.payload},
                           {"tokens_consumed", o.tokens_consumed},
                           {"error", o.error}});
        Json round{{"index", r.index},
                   {"report", r.report},
                   {"tool_calls", calls},
                   {"observations", obs},
                   {"is_final", r.is_final},
                   {"input_tokens", r.input_tokens},
                   {"output_tokens", r.output_tokens}};
        if (r.final_answer) round["final_answer"] = *r.final_answer;
        if (!r.refusal_note.empty()) round["refusal_note"] = r.refusal_note;
        rounds.push_back(std::move(round));
    }
    Json j{{"schema_version", 1},
           {"question", traj.question},
           {"rounds", rounds},
           {"aborted", traj.aborted},
           {"llm_calls", traj.llm_calls},
           {"tool_refusals", traj.tool_refusals},
           {"usage_estimated", traj.usage_estimated}};
    if (traj.final_answer) j["final_answer"] = *traj.final_answer;
    return j;
}

Trajectory trajectory_from_json(const Json& j) {
    Trajectory traj;
    traj.question = j.at("question").get<std::string>();
    traj.aborted = j.value("aborted", false);
    traj.llm_calls = j.value("llm_calls", 0l);
    traj.tool_refusals = j.value("tool_refusals", 0l);
    traj.usage_estimated = j.value("usage_estimated", false);
    if (j.contains("final_answer")) traj.final_answer = j["final_answer"].get<std::string>();
    for (const auto& rj : j.at("rounds")) {
        Round r;
        r.index = rj.at("index").get<int>();
        r.report = rj.at("report").get<std::string>();
        r.is_final = rj.value("is_final", false);
        r.input_tokens = rj.value("input_tokens", 0l);
        r.output_tokens = rj.value("output_tokens", 0l);
        r.refusal_note = rj.value("refusal_note", "");
        if (rj.contains("final_answer")) r.final_answer = rj["final_answer"].get<std::string>();
        for (const auto& cj : rj.at("tool_calls")) {
            auto call = tool_call_from_json(cj);
            if (!call) throw std::runtime_error("malformed tool call in trajectory JSON");
            r.tool_calls.push_back(*call);
        }
        for (const auto& oj : rj.at("observations")) {
            Observation o;
            auto tool = tool_from_name(oj.at("tool").get<std::string>());
            if (!tool) throw std::runtime_error("unknown tool in trajectory JSON");
            o.tool = *tool;
            o.payload = oj.at("payload");
            o.tokens_consumed = oj.value("tokens_consumed", 0l);
            o.error = oj.value("error", false);
            r.observations.push_back(std::move(o));
        }
        traj.rounds.push_back(std::move(r));
    }
    return traj;
}

}  // namespace zpd
