#pragma once

#include "zpd/agent_loop.hpp"
#include "zpd/providers.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace zpd {

enum class SegmentKind { question, prev_report, prev_observation, report };

const char* segment_kind_name(SegmentKind k);

struct Segment {
    std::string text;
    bool loss_masked = true;  // only the report segment carries loss
    SegmentKind kind = SegmentKind::question;
};

/// One training sample per round: the three context segments (masked) plus
/// the round's raw output (unmasked). Concatenating the segment texts
/// reproduces the round's serialized prompt + output byte for byte.
struct TrainingSample {
    std::string sample_id;
    std::string qa_id;
    int round_index = 1;
    std::vector<Segment> segments;
};

enum class AcceptMode { exact_match, judge };
enum class AcceptOutcome { accepted, rejected, indeterminate };

/// Rejection-sampling gate. A trajectory without a final answer is rejected
/// outright. exact_match compares after whitespace/case normalization; judge
/// mode delegates, and a judge failure yields indeterminate (excluded and
/// logged by callers, never silently accepted).
AcceptOutcome accept_trajectory(const Trajectory& traj, const std::string& gold, AcceptMode mode,
                                JudgeProvider* judge = nullptr);

std::vector<TrainingSample> to_training_samples(const Trajectory& traj, const std::string& question,
                                                const std::string& qa_id);

struct DatasetStats {
    double avg_rounds = 0.0;
    std::map<Tool, double> avg_calls;  // per trajectory
};

/// Per-trajectory means; raises on an empty list.
DatasetStats dataset_stats(std::span<const Trajectory> trajectories);

/// Uniform subsample without replacement to exactly target_rounds samples,
/// order-preserving and reproducible for a fixed seed. target above the
/// available count raises (no oversampling).
std::vector<TrainingSample> normalize_volume(std::vector<TrainingSample> samples,
                                             std::size_t target_rounds, std::uint64_t seed);

Json training_sample_to_json(const TrainingSample& sample);
TrainingSample training_sample_from_json(const Json& j);
Json dataset_stats_to_json(const DatasetStats& stats);

}  // namespace zpd
