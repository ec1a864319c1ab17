#include "zpd/evalkit.hpp"

#include "zpd/util.hpp"

#include <algorithm>
#include <stdexcept>

namespace zpd {

const char* exam_decision_name(ExamDecision d) {
    switch (d) {
        case ExamDecision::include: return "include";
        case ExamDecision::exclude: return "exclude";
        case ExamDecision::pending: return "pending";
    }
    return "pending";
}

ExamCandidate exam_filter(const QaPair& qa, const AgentConfig& baseline_untooled,
                          const AgentConfig& baseline_tooled, const AgentRuntime& rt,
                          const ExamFilterPolicy& policy) {
    if (baseline_untooled.tools_enabled || !baseline_tooled.tools_enabled)
        throw std::invalid_argument("exam_filter needs an untooled and a tooled config");
    if (baseline_untooled.name != baseline_tooled.name)
        throw std::invalid_argument(
            "exam_filter configs must share a model identity (name), differing only in tools");
    validate_qa(qa);

    ExamCandidate candidate;
    candidate.qa = qa;

    for (int attempt = 1; attempt <= policy.attempts; ++attempt) {
        std::string tag = "unaided attempt " + std::to_string(attempt);
        ProbeResult probe = is_solvable_by(baseline_untooled, qa, rt, Phase::verification, tag);
        if (probe.status == ProbeStatus::indeterminate) {
            candidate.decision = ExamDecision::pending;
            return candidate;
        }
        candidate.unaided_results.push_back(probe.solvable());
        if (probe.solvable()) {
            candidate.decision = ExamDecision::exclude;  // solvable unaided: not frontier
            return candidate;
        }
    }

    int aided_successes = 0;
    for (int attempt = 1; attempt <= policy.attempts; ++attempt) {
        std::string tag = "aided attempt " + std::to_string(attempt);
        ProbeResult probe = is_solvable_by(baseline_tooled, qa, rt, Phase::verification, tag);
        if (probe.status == ProbeStatus::indeterminate) {
            candidate.decision = ExamDecision::pending;
            return candidate;
        }
        candidate.aided_results.push_back(probe.solvable());
        if (probe.solvable()) {
            ++aided_successes;
        } else if (policy.require_all_aided) {
            candidate.decision = ExamDecision::exclude;  // consistency already broken
            return candidate;
        }
    }

    bool aided_ok = policy.require_all_aided ? (aided_successes == policy.attempts)
                                             : (aided_successes >= 1);
    candidate.decision = aided_ok ? ExamDecision::include : ExamDecision::exclude;
    return candidate;
}

ScoreResult score_run(const std::map<std::string, std::string>& answers,
                      const std::map<std::string, std::string>& gold, JudgeProvider& judge,
                      bool exclude_indeterminate) {
    if (answers.size() != gold.size())
        throw std::invalid_argument("score_run: answer/gold key sets differ in size");
    for (const auto& [id, _] : answers)
        if (!gold.count(id)) throw std::invalid_argument("score_run: no gold for question " + id);

    ScoreResult result;
    long correct = 0, denominator = 0;
    for (const auto& [id, response] : answers) {
        QuestionVerdict qv;
        qv.question_id = id;
        try {
            JudgeVerdict verdict = judge.judge_correct(id, response, gold.at(id));
            qv.correct = verdict.correct;
            qv.verdict = std::move(verdict);
        } catch (const std::exception&) {
            qv.indeterminate = true;
            ++result.indeterminate_count;
        }
        if (qv.indeterminate && exclude_indeterminate) {
            result.per_question.push_back(std::move(qv));
            continue;  // excluded from the denominator under the lenient flag
        }
        ++denominator;
        if (qv.correct) ++correct;
        result.per_question.push_back(std::move(qv));
    }
    result.accuracy = denominator ? static_cast<double>(correct) / denominator : 0.0;
    return result;
}

void AttemptMatrix::validate() const {
    if (cells.size() != question_ids.size())
        throw std::invalid_argument("attempt matrix: row count mismatch");
    std::size_t n = attempts();
    if (n < 1) throw std::invalid_argument("attempt matrix: need at least one attempt column");
    for (const auto& row : cells)
        if (row.size() != n) throw std::invalid_argument("attempt matrix must be rectangular");
}

std::vector<std::pair<int, double>> pass_at_n(const AttemptMatrix& matrix) {
    matrix.validate();
    std::size_t attempts = matrix.attempts();
    std::vector<std::pair<int, double>> curve;
    curve.reserve(attempts);
    std::vector<long> solved_by(attempts, 0);
    for (const auto& row : matrix.cells) {
        bool any = false;
        for (std::size_t n = 0; n < attempts; ++n) {
            any = any || row[n];
            if (any) ++solved_by[n];
        }
    }
    for (std::size_t n = 0; n < attempts; ++n)
        curve.emplace_back(static_cast<int>(n + 1),
                           static_cast<double>(solved_by[n]) /
                               static_cast<double>(matrix.cells.size()));
    return curve;
}

ToolAccuracyTable conditional_tool_accuracy(std::span<const Trajectory> trajectories,
                                            const std::vector<bool>& outcomes) {
    if (trajectories.size() != outcomes.size())
        throw std::invalid_argument("each trajectory needs a correctness outcome");
    if (trajectories.empty())
        throw std::invalid_argument("conditional_tool_accuracy requires trajectories");

    ToolAccuracyTable table;
    std::map<Tool, long> tasks_using, correct_using, total_calls;
    long total_rounds = 0, total_correct = 0;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        total_rounds += static_cast<long>(trajectories[i].rounds.size());
        if (outcomes[i]) ++total_correct;
        auto counts = trajectories[i].tool_call_counts();
        for (const auto& [tool, count] : counts) {
            if (count == 0) continue;
            ++tasks_using[tool];
            if (outcomes[i]) ++correct_using[tool];
            total_calls[tool] += count;
        }
    }
    // Denominators count tasks, not calls; a tool never used has no row.
    for (const auto& [tool, tasks] : tasks_using) {
        ToolAccuracy acc;
        acc.tasks_using = tasks;
        acc.accuracy = static_cast<double>(correct_using[tool]) / static_cast<double>(tasks);
        acc.usage_per_round =
            total_rounds ? static_cast<double>(total_calls[tool]) / total_rounds : 0.0;
        table.per_tool[tool] = acc;
    }
    table.overall_accuracy =
        static_cast<double>(total_correct) / static_cast<double>(trajectories.size());
    table.avg_rounds =
        static_cast<double>(total_rounds) / static_cast<double>(trajectories.size());
    return table;
}

Json exam_candidate_to_json(const ExamCandidate& c) {
    return Json{{"qa", qa_to_json(c.qa)},
                {"unaided_results", c.unaided_results},
                {"aided_results", c.aided_results},
                {"decision", exam_decision_name(c.decision)}};
}

Json pass_curve_to_json(const std::vector<std::pair<int, double>>& curve) {
    Json j = Json::array();
    for (const auto& [n, rate] : curve) j.push_back({{"n", n}, {"rate", rate}});
    return j;
}

Json tool_accuracy_to_json(const ToolAccuracyTable& table) {
    Json per_tool = Json::object();
    for (const auto& [tool, acc] : table.per_tool)
        per_tool[tool_name(tool)] = {{"usage_per_round", acc.usage_per_round},
                                     {"accuracy", acc.accuracy},
                                     {"tasks_using", acc.tasks_using}};
    return Json{{"per_tool", per_tool},
                {"overall_accuracy", table.overall_accuracy},
                {"avg_rounds", table.avg_rounds}};
}

}  // namespace zpd
