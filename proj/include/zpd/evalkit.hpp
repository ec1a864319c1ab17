#pragma once

#include "zpd/agent_loop.hpp"
#include "zpd/engine.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace zpd {

enum class ExamDecision { include, exclude, pending };

const char* exam_decision_name(ExamDecision d);

struct ExamCandidate {
    QaPair qa;
    std::vector<bool> unaided_results;  // length <= 3
    std::vector<bool> aided_results;    // length <= 3
    ExamDecision decision = ExamDecision::pending;
};

struct ExamFilterPolicy {
    int attempts = 3;
    /// "Consistently solvable" read as all aided attempts correct; the
    /// looser any-of-three reading is available for comparison.
    bool require_all_aided = true;
};

/// Dual-constraint filter: run `attempts` unaided attempts (short-circuit to
/// exclude on the first success), then the aided attempts only when all
/// unaided failed. include requires 0/N unaided and N/N aided. An
/// indeterminate judge yields pending, never include.
/// pre: the two configs share a model identity and differ in tools_enabled.
ExamCandidate exam_filter(const QaPair& qa, const AgentConfig& baseline_untooled,
                          const AgentConfig& baseline_tooled, const AgentRuntime& rt,
                          const ExamFilterPolicy& policy = {});

struct QuestionVerdict {
    std::string question_id;
    bool correct = false;
    bool indeterminate = false;
    std::optional<JudgeVerdict> verdict;
};

struct ScoreResult {
    double accuracy = 0.0;
    std::vector<QuestionVerdict> per_question;
    long indeterminate_count = 0;
};

/// Mean of judge verdicts over equal key sets. By default an indeterminate
/// judge counts the question incorrect; with exclude_indeterminate it leaves
/// the denominator instead.
ScoreResult score_run(const std::map<std::string, std::string>& answers,
                      const std::map<std::string, std::string>& gold, JudgeProvider& judge,
                      bool exclude_indeterminate = false);

struct AttemptMatrix {
    std::vector<std::string> question_ids;
    std::vector<std::vector<bool>> cells;  // rectangular: rows x attempts

    std::size_t attempts() const { return cells.empty() ? 0 : cells.front().size(); }
    void validate() const;
};

/// rate(n) = fraction of rows with at least one success among the first n
/// attempts, for n = 1..N. Monotone non-decreasing by construction.
std::vector<std::pair<int, double>> pass_at_n(const AttemptMatrix& matrix);

struct ToolAccuracy {
    double usage_per_round = 0.0;  // total calls of the tool / total rounds
    double accuracy = 0.0;         // correct tasks using the tool / tasks using it
    long tasks_using = 0;
};

struct ToolAccuracyTable {
    std::map<Tool, ToolAccuracy> per_tool;  // tools never used are absent
    double overall_accuracy = 0.0;
    double avg_rounds = 0.0;
};

/// pre: outcomes[i] is the correctness of trajectories[i]'s task.
ToolAccuracyTable conditional_tool_accuracy(std::span<const Trajectory> trajectories,
                                            const std::vector<bool>& outcomes);

Json exam_candidate_to_json(const ExamCandidate& candidate);
Json pass_curve_to_json(const std::vector<std::pair<int, double>>& curve);
Json tool_accuracy_to_json(const ToolAccuracyTable& table);

}  // namespace zpd
