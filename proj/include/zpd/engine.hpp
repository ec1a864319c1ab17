#pragma once

#include "zpd/agent_loop.hpp"
#include "zpd/corpus.hpp"
#include "zpd/cost_ledger.hpp"
#include "zpd/prompts.hpp"
#include "zpd/providers.hpp"
#include "zpd/toolkit.hpp"

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace zpd {

enum class Dimension {
    knowledge_expansion,
    conceptual_abstraction,
    factual_grounding,
    computational_formulation,
};

const char* dimension_name(Dimension d);
std::optional<Dimension> dimension_from_name(const std::string& name);

struct QaPair {
    std::string qa_id;
    std::string question;
    std::string answer;
    struct Lineage {
        std::string seed_unit_id;          // composite unit that seeded the chain
        int iteration = 0;                 // 0 for seeds
        std::optional<std::string> parent; // absent iff iteration == 0
    } lineage;
    std::set<Dimension> dimension_tags;
};

/// iteration 0 <=> parent absent; question and answer non-empty.
void validate_qa(const QaPair& qa);

Json qa_to_json(const QaPair& qa);
QaPair qa_from_json(const Json& j);

struct EngineConfig {
    int k_max = 30;
    int n_bon = 3;
    double epsilon = 0.7;
    /// Stop BoN at the first correct attempt. Off runs all N for statistics
    /// parity; the label cannot change either way.
    bool bon_short_circuit = true;
    AgentConfig lkp;     // tools_enabled must be false
    AgentConfig mko;     // tools_enabled must be true
    AgentConfig refine;  // tools_enabled must be true
};

/// Default agent configs wired to the prompt set.
EngineConfig make_engine_config(const PromptSet& prompts);
void validate_engine_config(const EngineConfig& cfg);

enum class PartitionLabel { pretrain, zpd, human, rejected_duplicate, quarantine };

const char* partition_name(PartitionLabel label);
PartitionLabel partition_from_name(const std::string& name);

struct MkoAttempt {
    Trajectory trajectory;
    std::optional<JudgeVerdict> verdict;  // absent when the judge was indeterminate
};

struct CalibrationRecord {
    std::string qa_id;
    /// absent = the probe itself was indeterminate (quarantine).
    std::optional<bool> lkp_solvable;
    std::vector<MkoAttempt> mko_attempts;
    PartitionLabel label = PartitionLabel::quarantine;
    std::optional<double> nearest_zpd_sim;  // max admission-time similarity
    std::string note;                       // quarantine reason etc.
};

Json calibration_to_json(const CalibrationRecord& record);
CalibrationRecord calibration_from_json(const Json& j);

/// Everything engine operations need to talk to the outside world.
struct AgentRuntime {
    GenerationProvider* generation = nullptr;
    JudgeProvider* judge = nullptr;
    RerankProvider* rerank = nullptr;
    EmbeddingProvider* embedding = nullptr;
    Toolkit* toolkit = nullptr;
    const PromptSet* prompts = nullptr;
    RetryPolicy retry;
    CostLedger* ledger = nullptr;                       // optional
    std::function<void(const std::string&)> log;        // optional warning sink
};

/// Record one finished trajectory's usage into the ledger (no-op without one).
void record_trajectory_cost(const AgentRuntime& rt, Phase phase, const Trajectory& traj);

class ChunkStore {
public:
    explicit ChunkStore(const std::vector<Chunk>& chunks);
    const Chunk* find(const std::string& chunk_id) const;

private:
    std::map<std::string, Chunk> by_id_;
};

/// Stage I tail: QA pair from a composite unit's three chunks; iteration 0,
/// lineage bound to the unit. A missing chunk raises naming the chunk_id.
QaPair generate_seed(const CompositeUnit& unit, const ChunkStore& chunks, const AgentRuntime& rt);

class EscalationStepError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One escalation step: run the refinement agent, parse its final JSON into
/// the child pair (iteration+1, parent set, declared dimensions recorded).
/// An unparseable output gets one reprompt, then EscalationStepError.
QaPair escalate_once(const QaPair& qa, const EngineConfig& cfg, const AgentRuntime& rt);

enum class ProbeStatus { solved, unsolved, indeterminate };

struct ProbeResult {
    ProbeStatus status = ProbeStatus::unsolved;
    Trajectory trajectory;
    std::optional<JudgeVerdict> verdict;

    bool solvable() const { return status == ProbeStatus::solved; }
};

/// Run one trajectory under cfg, judge its final answer against qa.answer.
/// No final answer => unsolved without consulting the judge. Judge failures
/// are retried; persistent failure marks the probe indeterminate.
/// `attempt_tag`, when non-empty, is appended to the system prompt so
/// independent attempts are distinguishable (and samplable) downstream.
ProbeResult is_solvable_by(const AgentConfig& cfg, const QaPair& qa, const AgentRuntime& rt,
                           Phase phase, const std::string& attempt_tag = "");

enum class StopReason { lkp_failed, k_max, quarantined };

const char* stop_reason_name(StopReason r);

struct FrontierResult {
    QaPair qa;                  // the frontier pair (== seed when iterations == 0)
    int iterations = 0;         // escalation steps applied
    StopReason stop_reason = StopReason::lkp_failed;
    std::vector<QaPair> chain;  // seed .. frontier, in iteration order
    std::string note;
};

/// Probe-then-escalate loop: stops with lkp_failed as soon as the current
/// pair is LKP-unsolvable, or with k_max after k_max escalations. Three
/// consecutive escalation-step failures (or an indeterminate LKP probe)
/// abort with quarantined.
FrontierResult refine_until_frontier(const QaPair& seed, const EngineConfig& cfg,
                                     const AgentRuntime& rt);

/// Stage III calibration: re-probe the LKP, then Best-of-N MKO verification.
/// pretrain when the LKP solves it; zpd (verified, pre-admission) when any
/// MKO attempt is judged correct; human when all N are judged incorrect;
/// quarantine when no attempt could be judged and none was correct.
CalibrationRecord calibrate(const QaPair& qa, const EngineConfig& cfg, const AgentRuntime& rt);

/// Admitted ZPD questions in admission order; admission is a serialized
/// critical section so the dedup invariant is exact.
class ZpdStore {
public:
    struct AdmissionResult {
        PartitionLabel label = PartitionLabel::zpd;
        double max_similarity = 0.0;  // over previously admitted questions
    };

    /// Rejects at max similarity >= epsilon; otherwise admits atomically.
    AdmissionResult admit(const QaPair& qa, RerankProvider& rerank, double epsilon,
                          const RetryPolicy& retry = {});

    std::vector<QaPair> admitted() const;

private:
    mutable std::mutex mutex_;
    std::vector<QaPair> admitted_;
};

struct SeedOutcome {
    std::size_t seed_index = 0;
    QaPair seed;
    std::vector<QaPair> chain;
    int iterations = 0;
    StopReason stop_reason = StopReason::lkp_failed;
    CalibrationRecord record;  // label is final (post-admission)
};

Json seed_outcome_to_json(const SeedOutcome& outcome);
SeedOutcome seed_outcome_from_json(const Json& j);

struct PipelineOptions {
    std::string run_dir;  // partitions, sidecars, report, checkpoints
    bool resume = false;
    /// Checkpoint location; defaults to <run_dir>/checkpoints.
    std::string checkpoint_dir;
    std::string manifest_hash;  // embedded in every output record
    PriceTable prices;
};

struct PipelineReport {
    long seed_count = 0;
    std::map<std::string, long> partition_counts;
    std::map<int, long> iteration_histogram;
    double mko_pass_rate = 0.0;   // verified / MKO-probed candidates
    double admission_rate = 0.0;  // zpd / verified
    CostReport cost;
    std::string checkpoint_dir;
    std::string manifest_hash;

    Json to_json() const;
};

/// Stages II and III over prepared seeds: parallel per-seed refinement and
/// calibration (checkpointed, resumable), then serialized admission in seed
/// order. Outputs land in opts.run_dir. Every quarantine is reported.
PipelineReport run_seed_pipeline(const std::vector<QaPair>& seeds, const EngineConfig& cfg,
                                 const AgentRuntime& rt, const PipelineOptions& opts,
                                 std::vector<SeedOutcome>* outcomes_out = nullptr);

/// Algorithm end-to-end from raw documents: chunk, embed, index, mine, seed,
/// then run_seed_pipeline. Fully resumable from the run_dir checkpoints.
PipelineReport run_pipeline(const std::vector<RawDocument>& docs, const EngineConfig& cfg,
                            const IndexConfig& index_cfg, const AgentRuntime& rt,
                            const PipelineOptions& opts);

}  // namespace zpd
