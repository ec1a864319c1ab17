#pragma once

#include "zpd/prompts.hpp"
#include "zpd/providers.hpp"
#include "zpd/toolkit.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace zpd {

struct AgentConfig {
    std::string name;
    bool tools_enabled = true;
    int max_rounds = 20;
    SamplingParams sampling;
    std::string system_prompt;
    /// Ablation switch: condition on the whole history instead of only the
    /// previous report-observation pair. Defaults off (Markovian rounds).
    bool full_history = false;
};

struct Round {
    int index = 1;  // 1-based
    /// The round's full raw model output (the reasoning report, including any
    /// trailing tool-call object or final-answer line).
    std::string report;
    std::vector<ToolCall> tool_calls;
    std::vector<Observation> observations;  // 1:1 with tool_calls
    bool is_final = false;
    std::optional<std::string> final_answer;
    /// Set when a tool request was refused (tools disabled): the observation
    /// text the next round saw instead. Keeps tool_calls/observations empty
    /// while round serialization stays reproducible.
    std::string refusal_note;
    long input_tokens = 0;
    long output_tokens = 0;
};

struct Trajectory {
    std::string question;
    std::vector<Round> rounds;
    std::optional<std::string> final_answer;
    bool aborted = false;
    long llm_calls = 0;      // rounds plus reprompts
    long tool_refusals = 0;  // tool requests refused because tools are disabled
    bool usage_estimated = false;  // any round's token counts were estimates

    std::map<Tool, long> tool_call_counts() const;
    long total_input_tokens() const;
    long total_output_tokens() const;
};

/// The three context pieces of a round prompt. Concatenated in order
/// (question, prev_report, prev_observation) they form the user message, and
/// the RFT exporter reuses them verbatim as masked segments. Empty previous
/// context yields empty segment strings.
struct RoundSegments {
    std::string question;
    std::string prev_report;
    std::string prev_observation;

    std::string user_message() const { return question + prev_report + prev_observation; }
};

RoundSegments make_round_segments(const std::string& question, const std::string& prev_report,
                                  const std::string& prev_obs_text);

/// Deterministic one-line-per-observation serialization used in prompts.
std::string serialize_observations(std::span<const Observation> observations);

/// The observation text the round contributed to the next round's prompt:
/// its serialized observations, or the refusal note when a tool request was
/// refused. Shared by the loop and the training-sample exporter.
std::string round_observation_text(const Round& round);

/// What a round's raw output parsed into.
struct ParsedRoundOutput {
    std::optional<ToolCall> tool_call;      // valid {"name","arguments"} suffix object
    std::optional<std::string> final_answer;  // text after the final-answer marker
    bool malformed_tool_call = false;       // looked like a tool call but did not parse
};

ParsedRoundOutput parse_round_output(const std::string& text);

struct TrajectoryHooks {
    /// Observes every prompt sent to the provider (context-isolation tests).
    std::function<void(std::span<const ChatMessage>)> on_prompt;
    std::function<void(const std::string&)> log;
};

/// Run the multi-round research loop: per round the model emits a reasoning
/// report and either one tool call or a final answer. Round j conditions only
/// on (question, r_{j-1}, o_{j-1}) unless cfg.full_history is set. Ends on a
/// final answer or after max_rounds (final answer absent). A provider failure
/// mid-round returns the rounds so far with `aborted` set.
///
/// With tools_enabled=false any tool request is refused: nothing is recorded
/// in tool_calls/observations (keeping the 1:1 alignment and all-zero count
/// invariants), the refusal is counted and logged, and the next round sees a
/// "no tools available" observation text.
Trajectory run_trajectory(const std::string& question, const AgentConfig& cfg,
                          GenerationProvider& provider, Toolkit* tools,
                          const RetryPolicy& retry = {}, TrajectoryHooks* hooks = nullptr);

/// Final-answer text of the terminal round, if any.
std::optional<std::string> extract_final_answer(const Trajectory& traj);

Json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const Json& j);

}  // namespace zpd
