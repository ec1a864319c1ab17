#include "zpd/rft_export.hpp"

#include "zpd/util.hpp"

#include <algorithm>
#include <stdexcept>

namespace zpd {

const char* segment_kind_name(SegmentKind k) {
    switch (k) {
        case SegmentKind::question: return "question";
        case SegmentKind::prev_report: return "prev_report";
        case SegmentKind::prev_observation: return "prev_observation";
        case SegmentKind::report: return "report";
    }
    return "question";
}

namespace {

SegmentKind segment_kind_from_name(const std::string& name) {
    if (name == "question") return SegmentKind::question;
    if (name == "prev_report") return SegmentKind::prev_report;
    if (name == "prev_observation") return SegmentKind::prev_observation;
    if (name == "report") return SegmentKind::report;
    throw std::invalid_argument("unknown segment kind: " + name);
}

}  // namespace

AcceptOutcome accept_trajectory(const Trajectory& traj, const std::string& gold, AcceptMode mode,
                                JudgeProvider* judge) {
    auto final_answer = extract_final_answer(traj);
    if (!final_answer) return AcceptOutcome::rejected;

    if (mode == AcceptMode::exact_match)
        return normalize_answer(*final_answer) == normalize_answer(gold)
                   ? AcceptOutcome::accepted
                   : AcceptOutcome::rejected;

    if (!judge) throw std::invalid_argument("judge mode requires a judge provider");
    try {
        JudgeVerdict verdict = judge->judge_correct(traj.question, *final_answer, gold);
        return verdict.correct ? AcceptOutcome::accepted : AcceptOutcome::rejected;
    } catch (const std::exception&) {
        return AcceptOutcome::indeterminate;
    }
}

std::vector<TrainingSample> to_training_samples(const Trajectory& traj, const std::string& question,
                                                const std::string& qa_id) {
    std::vector<TrainingSample> samples;
    samples.reserve(traj.rounds.size());
    std::string prev_report;
    std::string prev_obs_text;
    for (const auto& round : traj.rounds) {
        RoundSegments ctx = make_round_segments(question, prev_report, prev_obs_text);
        TrainingSample sample;
        sample.qa_id = qa_id;
        sample.round_index = round.index;
        sample.sample_id = qa_id + "#r" + std::to_string(round.index);
        sample.segments = {
            {ctx.question, true, SegmentKind::question},
            {ctx.prev_report, true, SegmentKind::prev_report},
            {ctx.prev_observation, true, SegmentKind::prev_observation},
            {round.report, false, SegmentKind::report},
        };
        samples.push_back(std::move(sample));

        prev_report = round.report;
        prev_obs_text = round_observation_text(round);
    }
    return samples;
}

DatasetStats dataset_stats(std::span<const Trajectory> trajectories) {
    if (trajectories.empty()) throw std::invalid_argument("dataset_stats requires trajectories");
    DatasetStats stats;
    for (Tool t : {Tool::search, Tool::scholar, Tool::browser, Tool::code}) stats.avg_calls[t] = 0;
    double total_rounds = 0;
    for (const auto& traj : trajectories) {
        total_rounds += static_cast<double>(traj.rounds.size());
        for (const auto& [tool, count] : traj.tool_call_counts())
            stats.avg_calls[tool] += static_cast<double>(count);
    }
    double n = static_cast<double>(trajectories.size());
    stats.avg_rounds = total_rounds / n;
    for (auto& [tool, sum] : stats.avg_calls) sum /= n;
    return stats;
}

std::vector<TrainingSample> normalize_volume(std::vector<TrainingSample> samples,
                                             std::size_t target_rounds, std::uint64_t seed) {
    if (target_rounds > samples.size())
        throw std::invalid_argument("normalize_volume: target exceeds available samples (" +
                                    std::to_string(target_rounds) + " > " +
                                    std::to_string(samples.size()) + ")");
    if (target_rounds == samples.size()) return samples;

    // Partial Fisher-Yates over indices, then restore input order.
    std::vector<std::size_t> indices(samples.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    DetRng rng(seed);
    for (std::size_t i = 0; i < target_rounds; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.uniform(indices.size() - i));
        std::swap(indices[i], indices[j]);
    }
    indices.resize(target_rounds);
    std::sort(indices.begin(), indices.end());

    std::vector<TrainingSample> out;
    out.reserve(target_rounds);
    for (std::size_t idx : indices) out.push_back(std::move(samples[idx]));
    return out;
}

Json training_sample_to_json(const TrainingSample& sample) {
    Json segments = Json::array();
    for (const auto& s : sample.segments)
        segments.push_back({{"text", s.text},
                            {"loss_masked", s.loss_masked},
                            {"kind", segment_kind_name(s.kind)}});
    return Json{{"sample_id", sample.sample_id},
                {"source", Json{{"qa_id", sample.qa_id}, {"round_index", sample.round_index}}},
                {"segments", segments}};
}

TrainingSample training_sample_from_json(const Json& j) {
    TrainingSample sample;
    sample.sample_id = j.at("sample_id").get<std::string>();
    sample.qa_id = j.at("source").at("qa_id").get<std::string>();
    sample.round_index = j.at("source").at("round_index").get<int>();
    for (const auto& sj : j.at("segments")) {
        Segment s;
        s.text = sj.at("text").get<std::string>();
        s.loss_masked = sj.at("loss_masked").get<bool>();
        s.kind = segment_kind_from_name(sj.at("kind").get<std::string>());
        sample.segments.push_back(std::move(s));
    }
    return sample;
}

Json dataset_stats_to_json(const DatasetStats& stats) {
    Json calls = Json::object();
    for (const auto& [tool, avg] : stats.avg_calls) calls[tool_name(tool)] = avg;
    return Json{{"avg_rounds", stats.avg_rounds}, {"avg_calls", calls}};
}

}  // namespace zpd
