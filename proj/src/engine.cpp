#include "zpd/engine.hpp"

#include "zpd/jsonl.hpp"
#include "zpd/util.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

namespace zpd {

namespace fs = std::filesystem;

const char* dimension_name(Dimension d) {
    switch (d) {
        case Dimension::knowledge_expansion: return "knowledge_expansion";
        case Dimension::conceptual_abstraction: return "conceptual_abstraction";
        case Dimension::factual_grounding: return "factual_grounding";
        case Dimension::computational_formulation: return "computational_formulation";
    }
    return "knowledge_expansion";
}

std::optional<Dimension> dimension_from_name(const std::string& name) {
    if (name == "knowledge_expansion") return Dimension::knowledge_expansion;
    if (name == "conceptual_abstraction") return Dimension::conceptual_abstraction;
    if (name == "factual_grounding") return Dimension::factual_grounding;
    if (name == "computational_formulation") return Dimension::computational_formulation;
    return std::nullopt;
}

void validate_qa(const QaPair& qa) {
    if (trim(qa.question).empty() || trim(qa.answer).empty())
        throw std::invalid_argument("qa question/answer must be non-empty: " + qa.qa_id);
    if ((qa.lineage.iteration == 0) != !qa.lineage.parent.has_value())
        throw std::invalid_argument("qa lineage: iteration 0 iff parent absent: " + qa.qa_id);
    if (qa.lineage.iteration < 0)
        throw std::invalid_argument("qa lineage: iteration must be >= 0: " + qa.qa_id);
}

Json qa_to_json(const QaPair& qa) {
    Json tags = Json::array();
    for (Dimension d : qa.dimension_tags) tags.push_back(dimension_name(d));
    Json lineage{{"seed_unit", qa.lineage.seed_unit_id}, {"iteration", qa.lineage.iteration}};
    if (qa.lineage.parent) lineage["parent"] = *qa.lineage.parent;
    return Json{{"qa_id", qa.qa_id},
                {"question", qa.question},
                {"answer", qa.answer},
                {"lineage", lineage},
                {"dimension_tags", tags}};
}

QaPair qa_from_json(const Json& j) {
    QaPair qa;
    qa.qa_id = j.at("qa_id").get<std::string>();
    qa.question = j.at("question").get<std::string>();
    qa.answer = j.at("answer").get<std::string>();
    const Json& lineage = j.at("lineage");
    qa.lineage.seed_unit_id = lineage.value("seed_unit", "");
    qa.lineage.iteration = lineage.at("iteration").get<int>();
    if (lineage.contains("parent")) qa.lineage.parent = lineage["parent"].get<std::string>();
    for (const auto& t : j.value("dimension_tags", Json::array()))
        if (auto d = dimension_from_name(t.get<std::string>())) qa.dimension_tags.insert(*d);
    return qa;
}

EngineConfig make_engine_config(const PromptSet& prompts) {
    EngineConfig cfg;
    cfg.lkp = AgentConfig{"lkp", false, 20, {}, prompts.get("agent_system_untooled"), false};
    cfg.mko = AgentConfig{"mko", true, 20, {}, prompts.get("agent_system_tooled"), false};
    cfg.refine = AgentConfig{"refine", true, 20, {}, prompts.get("refine_system"), false};
    return cfg;
}

void validate_engine_config(const EngineConfig& cfg) {
    if (cfg.k_max < 1) throw std::invalid_argument("k_max must be >= 1");
    if (cfg.n_bon < 1) throw std::invalid_argument("n_bon must be >= 1");
    if (cfg.epsilon < 0.0 || cfg.epsilon > 1.0)
        throw std::invalid_argument("epsilon must be in [0,1]");
    if (cfg.lkp.tools_enabled) throw std::invalid_argument("lkp config must have tools disabled");
    if (!cfg.mko.tools_enabled) throw std::invalid_argument("mko config must have tools enabled");
    if (!cfg.refine.tools_enabled)
        throw std::invalid_argument("refine config must have tools enabled");
}

const char* partition_name(PartitionLabel label) {
    switch (label) {
        case PartitionLabel::pretrain: return "pretrain";
        case PartitionLabel::zpd: return "zpd";
        case PartitionLabel::human: return "human";
        case PartitionLabel::rejected_duplicate: return "rejected_duplicate";
        case PartitionLabel::quarantine: return "quarantine";
    }
    return "quarantine";
}

PartitionLabel partition_from_name(const std::string& name) {
    if (name == "pretrain") return PartitionLabel::pretrain;
    if (name == "zpd") return PartitionLabel::zpd;
    if (name == "human") return PartitionLabel::human;
    if (name == "rejected_duplicate") return PartitionLabel::rejected_duplicate;
    if (name == "quarantine") return PartitionLabel::quarantine;
    throw std::invalid_argument("unknown partition label: " + name);
}

namespace {

Json verdict_to_json(const JudgeVerdict& v) {
    Json j{{"reasoning", v.reasoning}, {"correct", v.correct}, {"confidence", v.confidence}};
    if (v.extracted_final_answer) j["extracted_final_answer"] = *v.extracted_final_answer;
    return j;
}

JudgeVerdict verdict_from_json(const Json& j) {
    JudgeVerdict v;
    v.reasoning = j.value("reasoning", "");
    v.correct = j.at("correct").get<bool>();
    v.confidence = j.value("confidence", 100);
    if (j.contains("extracted_final_answer"))
        v.extracted_final_answer = j["extracted_final_answer"].get<std::string>();
    return v;
}

}  // namespace

Json calibration_to_json(const CalibrationRecord& r) {
    Json attempts = Json::array();
    for (const auto& a : r.mko_attempts) {
        Json aj{{"trajectory", trajectory_to_json(a.trajectory)}};
        if (a.verdict) aj["verdict"] = verdict_to_json(*a.verdict);
        attempts.push_back(std::move(aj));
    }
    Json j{{"qa_id", r.qa_id},
           {"mko_attempts", attempts},
           {"label", partition_name(r.label)}};
    if (r.lkp_solvable) j["lkp_solvable"] = *r.lkp_solvable;
    if (r.nearest_zpd_sim) j["nearest_zpd_sim"] = *r.nearest_zpd_sim;
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

CalibrationRecord calibration_from_json(const Json& j) {
    CalibrationRecord r;
    r.qa_id = j.at("qa_id").get<std::string>();
    if (j.contains("lkp_solvable")) r.lkp_solvable = j["lkp_solvable"].get<bool>();
    r.label = partition_from_name(j.at("label").get<std::string>());
    if (j.contains("nearest_zpd_sim")) r.nearest_zpd_sim = j["nearest_zpd_sim"].get<double>();
    r.note = j.value("note", "");
    for (const auto& aj : j.value("mko_attempts", Json::array())) {
        MkoAttempt a;
        a.trajectory = trajectory_from_json(aj.at("trajectory"));
        if (aj.contains("verdict")) a.verdict = verdict_from_json(aj["verdict"]);
        r.mko_attempts.push_back(std::move(a));
    }
    return r;
}

void record_trajectory_cost(const AgentRuntime& rt, Phase phase, const Trajectory& traj) {
    if (!rt.ledger) return;
    CostEvent e;
    e.llm_calls = static_cast<double>(traj.llm_calls);
    e.input_tokens = static_cast<double>(traj.total_input_tokens());
    e.output_tokens = static_cast<double>(traj.total_output_tokens());
    e.estimated = traj.usage_estimated;
    for (const auto& round : traj.rounds) {
        for (const auto& call : round.tool_calls) {
            switch (call.tool) {
                case Tool::search: e.search_calls += 1; break;
                case Tool::scholar: e.scholar_calls += 1; break;
                case Tool::browser: break;  // priced per token below
                case Tool::code: e.code_calls += 1; break;
            }
        }
        for (const auto& obs : round.observations)
            if (obs.tool == Tool::browser) e.browser_tokens += static_cast<double>(obs.tokens_consumed);
    }
    rt.ledger->record(phase, e);
}

ChunkStore::ChunkStore(const std::vector<Chunk>& chunks) {
    for (const auto& c : chunks) by_id_.emplace(c.chunk_id, c);
}

const Chunk* ChunkStore::find(const std::string& chunk_id) const {
    auto it = by_id_.find(chunk_id);
    return it == by_id_.end() ? nullptr : &it->second;
}

namespace {

std::string strip_code_fences(const std::string& text) {
    std::string t = trim(text);
    if (starts_with(t, "```")) {
        std::size_t first_nl = t.find('\n');
        std::size_t last_fence = t.rfind("```");
        if (first_nl != std::string::npos && last_fence > first_nl)
            return trim(t.substr(first_nl + 1, last_fence - first_nl - 1));
    }
    return t;
}

std::optional<Json> parse_qa_json(const std::string& text) {
    std::string body = strip_code_fences(text);
    Json j = Json::parse(body, nullptr, false);
    if (j.is_discarded()) {
        // Fall back to the outermost trailing object.
        std::size_t pos = body.find('{');
        if (pos == std::string::npos) return std::nullopt;
        j = Json::parse(body.substr(pos), nullptr, false);
        if (j.is_discarded()) return std::nullopt;
    }
    if (!j.is_object() || !j.contains("question") || !j.contains("answer")) return std::nullopt;
    if (!j["question"].is_string() || !j["answer"].is_string()) return std::nullopt;
    if (trim(j["question"].get<std::string>()).empty() ||
        trim(j["answer"].get<std::string>()).empty())
        return std::nullopt;
    return j;
}

}  // namespace

QaPair generate_seed(const CompositeUnit& unit, const ChunkStore& chunks, const AgentRuntime& rt) {
    std::array<const Chunk*, 3> resolved{};
    for (std::size_t i = 0; i < 3; ++i) {
        resolved[i] = chunks.find(unit.chunk_ids[i]);
        if (!resolved[i])
            throw std::runtime_error("composite unit references missing chunk: " +
                                     unit.chunk_ids[i]);
    }

    std::vector<ChatMessage> messages{
        {Role::system, rt.prompts->get("seed_system")},
        {Role::user, render(rt.prompts->get("seed_user"), {{"chunk1", resolved[0]->text},
                                                           {"chunk2", resolved[1]->text},
                                                           {"chunk3", resolved[2]->text}})}};
    SamplingParams params;
    GenerationResult gen =
        with_retries(rt.retry, [&] { return rt.generation->generate(messages, params); });
    if (rt.ledger)
        rt.ledger->record(Phase::refinement,
                          CostEvent{1, static_cast<double>(gen.input_tokens),
                                    static_cast<double>(gen.output_tokens), 0, 0, 0, 0,
                                    gen.usage_estimated});

    auto parsed = parse_qa_json(gen.text);
    if (!parsed)
        throw std::runtime_error("seed generation returned no parseable QA for unit " +
                                 unit.unit_id());

    QaPair qa;
    qa.qa_id = "qa-" + sha256_hex(unit.unit_id()).substr(0, 12);
    qa.question = trim((*parsed)["question"].get<std::string>());
    qa.answer = trim((*parsed)["answer"].get<std::string>());
    qa.lineage.seed_unit_id = unit.unit_id();
    qa.lineage.iteration = 0;
    validate_qa(qa);
    return qa;
}

QaPair escalate_once(const QaPair& qa, const EngineConfig& cfg, const AgentRuntime& rt) {
    validate_qa(qa);
    Json pair_json{{"question", qa.question}, {"answer", qa.answer}};
    std::string question =
        render(rt.prompts->get("refine_user"), {{"pair_json", pair_json.dump()}});

    auto attempt = [&](const std::string& tag) -> std::optional<QaPair> {
        AgentConfig agent = cfg.refine;
        if (!tag.empty()) agent.system_prompt += "\n[" + tag + "]";
        Trajectory traj = run_trajectory(question, agent, *rt.generation, rt.toolkit, rt.retry);
        record_trajectory_cost(rt, Phase::refinement, traj);
        auto final_answer = extract_final_answer(traj);
        if (!final_answer) return std::nullopt;
        auto parsed = parse_qa_json(*final_answer);
        if (!parsed) return std::nullopt;
        QaPair child;
        child.qa_id = qa.qa_id + ".r" + std::to_string(qa.lineage.iteration + 1);
        child.question = trim((*parsed)["question"].get<std::string>());
        child.answer = trim((*parsed)["answer"].get<std::string>());
        child.lineage.seed_unit_id = qa.lineage.seed_unit_id;
        child.lineage.iteration = qa.lineage.iteration + 1;
        child.lineage.parent = qa.qa_id;
        if (parsed->contains("dimensions") && (*parsed)["dimensions"].is_array())
            for (const auto& d : (*parsed)["dimensions"])
                if (d.is_string())
                    if (auto dim = dimension_from_name(d.get<std::string>()))
                        child.dimension_tags.insert(*dim);
        validate_qa(child);
        return child;
    };

    if (auto child = attempt("")) return *child;
    if (auto child = attempt("reprompt: reply with only the final JSON object"))
        return *child;
    throw EscalationStepError("escalation produced no parseable refined pair for " + qa.qa_id);
}

ProbeResult is_solvable_by(const AgentConfig& cfg, const QaPair& qa, const AgentRuntime& rt,
                           Phase phase, const std::string& attempt_tag) {
    validate_qa(qa);
    AgentConfig agent = cfg;
    if (!attempt_tag.empty()) agent.system_prompt += "\n[" + attempt_tag + "]";

    ProbeResult result;
    result.trajectory =
        run_trajectory(qa.question, agent, *rt.generation, cfg.tools_enabled ? rt.toolkit : nullptr,
                       rt.retry);
    record_trajectory_cost(rt, phase, result.trajectory);

    auto final_answer = extract_final_answer(result.trajectory);
    if (!final_answer) {
        result.status = ProbeStatus::unsolved;
        return result;
    }

    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            JudgeVerdict verdict = with_retries(rt.retry, [&] {
                return rt.judge->judge_correct(qa.question, *final_answer, qa.answer);
            });
            result.verdict = verdict;
            result.status = verdict.correct ? ProbeStatus::solved : ProbeStatus::unsolved;
            return result;
        } catch (const std::exception& e) {
            if (attempt == 1 && rt.log)
                rt.log("judge indeterminate for " + qa.qa_id + ": " + e.what());
        }
    }
    result.status = ProbeStatus::indeterminate;
    return result;
}

const char* stop_reason_name(StopReason r) {
    switch (r) {
        case StopReason::lkp_failed: return "lkp_failed";
        case StopReason::k_max: return "k_max";
        case StopReason::quarantined: return "quarantined";
    }
    return "quarantined";
}

FrontierResult refine_until_frontier(const QaPair& seed, const EngineConfig& cfg,
                                     const AgentRuntime& rt) {
    if (seed.lineage.iteration != 0)
        throw std::invalid_argument("refine_until_frontier requires an iteration-0 seed");
    validate_engine_config(cfg);

    FrontierResult result;
    result.qa = seed;
    result.chain.push_back(seed);

    int consecutive_failures = 0;
    for (;;) {
        ProbeResult probe = is_solvable_by(cfg.lkp, result.qa, rt, Phase::refinement);
        if (probe.status == ProbeStatus::indeterminate) {
            result.stop_reason = StopReason::quarantined;
            result.note = "indeterminate LKP probe at iteration " +
                          std::to_string(result.iterations);
            return result;
        }
        if (probe.status == ProbeStatus::unsolved) {
            result.stop_reason = StopReason::lkp_failed;
            return result;
        }
        if (result.iterations == cfg.k_max) {
            result.stop_reason = StopReason::k_max;
            return result;
        }

        try {
            QaPair child = escalate_once(result.qa, cfg, rt);
            result.qa = child;
            result.chain.push_back(std::move(child));
            ++result.iterations;
            consecutive_failures = 0;
        } catch (const EscalationStepError& e) {
            if (++consecutive_failures >= 3) {
                result.stop_reason = StopReason::quarantined;
                result.note = std::string("escalation failed 3x consecutively: ") + e.what();
                return result;
            }
        }
    }
}

CalibrationRecord calibrate(const QaPair& qa, const EngineConfig& cfg, const AgentRuntime& rt) {
    validate_engine_config(cfg);
    CalibrationRecord record;
    record.qa_id = qa.qa_id;

    // Stage III runs its own probe even for frontier candidates; with
    // stochastic providers the outcome can flip, and the record must reflect
    // this stage's result.
    ProbeResult lkp_probe = is_solvable_by(cfg.lkp, qa, rt, Phase::verification, "calibration probe");
    if (lkp_probe.status == ProbeStatus::indeterminate) {
        record.label = PartitionLabel::quarantine;
        record.note = "indeterminate LKP probe during calibration";
        return record;
    }
    record.lkp_solvable = lkp_probe.solvable();
    if (lkp_probe.solvable()) {
        record.label = PartitionLabel::pretrain;
        return record;  // no MKO attempts are spent on LKP-solvable pairs
    }

    bool any_correct = false;
    bool any_indeterminate = false;
    for (int attempt = 1; attempt <= cfg.n_bon; ++attempt) {
        std::string tag = "attempt " + std::to_string(attempt) + " of " + std::to_string(cfg.n_bon);
        ProbeResult probe = is_solvable_by(cfg.mko, qa, rt, Phase::verification, tag);
        record.mko_attempts.push_back({std::move(probe.trajectory), probe.verdict});
        if (probe.status == ProbeStatus::solved) {
            any_correct = true;
            if (cfg.bon_short_circuit) break;
        } else if (probe.status == ProbeStatus::indeterminate) {
            any_indeterminate = true;
        }
    }

    if (any_correct) {
        record.label = PartitionLabel::zpd;  // verified; admission may still dedup
    } else if (any_indeterminate) {
        record.label = PartitionLabel::quarantine;
        record.note = "no MKO attempt judged correct and at least one was indeterminate";
    } else {
        record.label = PartitionLabel::human;
    }
    return record;
}

ZpdStore::AdmissionResult ZpdStore::admit(const QaPair& qa, RerankProvider& rerank, double epsilon,
                                          const RetryPolicy& retry) {
    std::lock_guard<std::mutex> lock(mutex_);
    double max_sim = 0.0;
    for (const auto& prior : admitted_) {
        double sim = with_retries(retry, [&] {
            return rerank.rerank_similarity(qa.question, prior.question);
        });
        max_sim = std::max(max_sim, sim);
        if (max_sim >= epsilon) break;
    }
    if (!admitted_.empty() && max_sim >= epsilon)
        return {PartitionLabel::rejected_duplicate, max_sim};
    admitted_.push_back(qa);
    return {PartitionLabel::zpd, max_sim};
}

std::vector<QaPair> ZpdStore::admitted() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return admitted_;
}

Json seed_outcome_to_json(const SeedOutcome& o) {
    Json chain = Json::array();
    for (const auto& qa : o.chain) chain.push_back(qa_to_json(qa));
    return Json{{"seed_index", o.seed_index},
                {"seed", qa_to_json(o.seed)},
                {"chain", chain},
                {"iterations", o.iterations},
                {"stop_reason", stop_reason_name(o.stop_reason)},
                {"record", calibration_to_json(o.record)}};
}

SeedOutcome seed_outcome_from_json(const Json& j) {
    SeedOutcome o;
    o.seed_index = j.at("seed_index").get<std::size_t>();
    o.seed = qa_from_json(j.at("seed"));
    for (const auto& c : j.at("chain")) o.chain.push_back(qa_from_json(c));
    o.iterations = j.at("iterations").get<int>();
    std::string reason = j.at("stop_reason").get<std::string>();
    if (reason == "lkp_failed") o.stop_reason = StopReason::lkp_failed;
    else if (reason == "k_max") o.stop_reason = StopReason::k_max;
    else o.stop_reason = StopReason::quarantined;
    o.record = calibration_from_json(j.at("record"));
    return o;
}

Json PipelineReport::to_json() const {
    Json hist = Json::object();
    for (const auto& [iters, count] : iteration_histogram)
        hist[std::to_string(iters)] = count;
    return Json{{"seed_count", seed_count},
                {"partition_counts", partition_counts},
                {"iteration_histogram", hist},
                {"mko_pass_rate", mko_pass_rate},
                {"admission_rate", admission_rate},
                {"cost", cost_report_to_json(cost)},
                {"checkpoint_dir", checkpoint_dir},
                {"manifest_hash", manifest_hash}};
}

namespace {

SeedOutcome process_seed(std::size_t index, const QaPair& seed, const EngineConfig& cfg,
                         const AgentRuntime& rt) {
    SeedOutcome outcome;
    outcome.seed_index = index;
    outcome.seed = seed;

    FrontierResult frontier = refine_until_frontier(seed, cfg, rt);
    outcome.chain = frontier.chain;
    outcome.iterations = frontier.iterations;
    outcome.stop_reason = frontier.stop_reason;

    if (frontier.stop_reason == StopReason::quarantined) {
        outcome.record.qa_id = frontier.qa.qa_id;
        outcome.record.label = PartitionLabel::quarantine;
        outcome.record.note = frontier.note;
        return outcome;
    }

    try {
        outcome.record = calibrate(frontier.qa, cfg, rt);
    } catch (const std::exception& e) {
        outcome.record.qa_id = frontier.qa.qa_id;
        outcome.record.label = PartitionLabel::quarantine;
        outcome.record.note = std::string("calibration error: ") + e.what();
    }
    return outcome;
}

const QaPair& frontier_of(const SeedOutcome& outcome) { return outcome.chain.back(); }

fs::path checkpoint_dir_of(const PipelineOptions& opts) {
    return opts.checkpoint_dir.empty() ? fs::path(opts.run_dir) / "checkpoints"
                                       : fs::path(opts.checkpoint_dir);
}

}  // namespace

PipelineReport run_seed_pipeline(const std::vector<QaPair>& seeds, const EngineConfig& cfg,
                                 const AgentRuntime& rt, const PipelineOptions& opts,
                                 std::vector<SeedOutcome>* outcomes_out) {
    validate_engine_config(cfg);
    fs::create_directories(opts.run_dir);
    fs::path checkpoints = checkpoint_dir_of(opts);
    fs::create_directories(checkpoints);
    std::string progress_path = (checkpoints / "progress.jsonl").string();

    // Per-seed sub-ledgers merge in seed order afterwards so the audit log is
    // deterministic regardless of thread interleaving. Checkpointed seeds
    // replay their recorded events, keeping resumed and uninterrupted runs
    // equal down to the cost report.
    std::vector<CostLedger> seed_ledgers(seeds.size());

    std::vector<std::optional<SeedOutcome>> outcomes(seeds.size());
    if (opts.resume && fs::exists(progress_path)) {
        for (const auto& line : read_jsonl_tolerant(progress_path)) {
            SeedOutcome o = seed_outcome_from_json(line);
            if (o.seed_index >= outcomes.size()) continue;
            if (line.contains("cost_events")) {
                std::vector<Json> events(line["cost_events"].begin(), line["cost_events"].end());
                seed_ledgers[o.seed_index] = CostLedger::from_audit_log_json(events);
            }
            outcomes[o.seed_index] = std::move(o);
        }
    } else if (fs::exists(progress_path)) {
        fs::remove(progress_path);
    }
    std::mutex progress_mutex;
    std::exception_ptr first_error;
    std::mutex error_mutex;

    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        auto idx = static_cast<std::size_t>(i);
        if (outcomes[idx]) continue;  // restored from checkpoint
        try {
            AgentRuntime seed_rt = rt;
            seed_rt.ledger = &seed_ledgers[idx];
            SeedOutcome outcome = process_seed(idx, seeds[idx], cfg, seed_rt);
            {
                Json line = seed_outcome_to_json(outcome);
                line["cost_events"] = seed_ledgers[idx].audit_log_json();
                std::lock_guard<std::mutex> lock(progress_mutex);
                append_jsonl(progress_path, line);
            }
            outcomes[idx] = std::move(outcome);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    if (rt.ledger)
        for (auto& ledger : seed_ledgers) rt.ledger->merge_from(ledger);

    // Serialized admission in seed order makes the dedup invariant exact.
    ZpdStore store;
    for (auto& slot : outcomes) {
        SeedOutcome& outcome = *slot;
        if (outcome.record.label != PartitionLabel::zpd) continue;
        try {
            auto admission = store.admit(frontier_of(outcome), *rt.rerank, cfg.epsilon, rt.retry);
            outcome.record.label = admission.label;
            outcome.record.nearest_zpd_sim = admission.max_similarity;
        } catch (const std::exception& e) {
            outcome.record.label = PartitionLabel::quarantine;
            outcome.record.note = std::string("admission error (never skipped): ") + e.what();
        }
    }

    PipelineReport report;
    report.seed_count = static_cast<long>(seeds.size());
    // Relative when housed in the run dir, so reports stay byte-comparable.
    report.checkpoint_dir =
        checkpoints.lexically_normal() == (fs::path(opts.run_dir) / "checkpoints").lexically_normal()
            ? "checkpoints"
            : checkpoints.string();
    report.manifest_hash = opts.manifest_hash;
    for (const char* name : {"pretrain", "zpd", "human", "rejected_duplicate", "quarantine"})
        report.partition_counts[name] = 0;

    long mko_probed = 0, verified = 0;
    std::map<std::string, std::vector<Json>> partition_records;
    std::vector<Json> calibration_lines;
    for (const auto& slot : outcomes) {
        const SeedOutcome& outcome = *slot;
        ++report.partition_counts[partition_name(outcome.record.label)];
        ++report.iteration_histogram[outcome.iterations];
        if (!outcome.record.mko_attempts.empty()) {
            ++mko_probed;
            bool ok = false;
            for (const auto& a : outcome.record.mko_attempts)
                if (a.verdict && a.verdict->correct) ok = true;
            if (ok) ++verified;
        }
        Json qa_record = qa_to_json(frontier_of(outcome));
        qa_record["label"] = partition_name(outcome.record.label);
        qa_record["manifest_hash"] = opts.manifest_hash;
        partition_records[partition_name(outcome.record.label)].push_back(std::move(qa_record));

        Json cal = calibration_to_json(outcome.record);
        cal["seed_index"] = outcome.seed_index;
        cal["manifest_hash"] = opts.manifest_hash;
        calibration_lines.push_back(std::move(cal));
    }
    report.mko_pass_rate = mko_probed ? static_cast<double>(verified) / mko_probed : 0.0;
    long zpd_count = report.partition_counts["zpd"];
    report.admission_rate = verified ? static_cast<double>(zpd_count) / verified : 0.0;
    if (rt.ledger) report.cost = total_cost(*rt.ledger, opts.prices);

    for (const char* name : {"pretrain", "zpd", "human", "rejected_duplicate", "quarantine"})
        write_jsonl((fs::path(opts.run_dir) / (std::string(name) + ".jsonl")).string(),
                    partition_records[name]);
    write_jsonl((fs::path(opts.run_dir) / "calibration.jsonl").string(), calibration_lines);
    if (rt.ledger) {
        std::vector<Json> audit;
        for (auto& line : rt.ledger->audit_log_json()) audit.push_back(line);
        write_jsonl((fs::path(opts.run_dir) / "cost_audit.jsonl").string(), audit);
    }
    write_file_atomic((fs::path(opts.run_dir) / "report.json").string(),
                      report.to_json().dump(2) + "\n");

    if (outcomes_out) {
        outcomes_out->clear();
        for (auto& slot : outcomes) outcomes_out->push_back(std::move(*slot));
    }
    return report;
}

PipelineReport run_pipeline(const std::vector<RawDocument>& docs, const EngineConfig& cfg,
                            const IndexConfig& index_cfg, const AgentRuntime& rt,
                            const PipelineOptions& opts) {
    validate_engine_config(cfg);
    validate_index_config(index_cfg);
    fs::create_directories(opts.run_dir);
    fs::path checkpoints = checkpoint_dir_of(opts);
    fs::create_directories(checkpoints);

    auto warn = rt.log ? rt.log : [](const std::string&) {};

    // Stage I provider costs live in their own ledger, persisted with the
    // checkpoints: resuming must reproduce the cost report exactly. Stage I
    // checkpoints are all-or-nothing (the cost log is written at the end), so
    // a partially chunked run recomputes the stage.
    CostLedger stage1_ledger;
    std::string chunks_path = (checkpoints / "chunks.jsonl").string();
    std::string embeddings_path = (checkpoints / "embeddings.jsonl").string();
    std::string seeds_path = (checkpoints / "seeds.jsonl").string();
    std::string stage1_costs_path = (checkpoints / "stage1_costs.jsonl").string();
    AgentRuntime stage1_rt = rt;
    stage1_rt.ledger = &stage1_ledger;

    std::vector<Chunk> chunks;
    std::vector<QaPair> seeds;
    bool stage1_done = opts.resume && fs::exists(chunks_path) && fs::exists(seeds_path) &&
                       fs::exists(stage1_costs_path);
    if (stage1_done) {
        chunks = read_chunks_jsonl(chunks_path);
        if (fs::exists(embeddings_path)) attach_embeddings_jsonl(embeddings_path, chunks);
        for (const auto& j : read_jsonl(seeds_path)) seeds.push_back(qa_from_json(j));
        stage1_ledger = CostLedger::from_audit_log_json(read_jsonl_tolerant(stage1_costs_path));
    } else {
        for (const auto& doc : docs) {
            auto doc_chunks =
                chunk_document(doc, rt.generation, *rt.prompts, rt.retry, warn, {},
                               [&](const GenerationResult& gen) {
                                   stage1_ledger.record(
                                       Phase::refinement,
                                       CostEvent{1, static_cast<double>(gen.input_tokens),
                                                 static_cast<double>(gen.output_tokens), 0, 0, 0,
                                                 0, gen.usage_estimated});
                               });
            for (auto& c : doc_chunks) chunks.push_back(std::move(c));
        }
        write_chunks_jsonl(chunks_path, chunks);

        if (!chunks.empty()) {
            std::vector<std::string> texts;
            texts.reserve(chunks.size());
            for (const auto& c : chunks) texts.push_back(c.text);
            auto vectors = rt.embedding->embed(texts);
            for (std::size_t i = 0; i < chunks.size(); ++i) chunks[i].embedding = vectors[i];
            write_embeddings_jsonl(embeddings_path, chunks);
        }

        std::vector<CompositeUnit> units;
        if (!chunks.empty()) {
            VectorIndex index = VectorIndex::build(chunks);
            units = mine_composite_units(index, index_cfg);
        }
        std::vector<Json> unit_lines;
        for (const auto& u : units)
            unit_lines.push_back({{"chunk_ids", u.chunk_ids}, {"pairwise_sims", u.pairwise_sims}});
        write_jsonl((checkpoints / "units.jsonl").string(), unit_lines);

        ChunkStore chunk_store(chunks);
        for (const auto& unit : units) {
            try {
                seeds.push_back(generate_seed(unit, chunk_store, stage1_rt));
            } catch (const std::exception& e) {
                warn("seed generation skipped unit " + unit.unit_id() + ": " + e.what());
            }
        }
        std::vector<Json> seed_lines;
        for (const auto& qa : seeds) seed_lines.push_back(qa_to_json(qa));
        write_jsonl(seeds_path, seed_lines);

        std::vector<Json> cost_lines;
        for (auto& line : stage1_ledger.audit_log_json()) cost_lines.push_back(line);
        write_jsonl(stage1_costs_path, cost_lines);
    }
    if (rt.ledger) rt.ledger->merge_from(stage1_ledger);

    return run_seed_pipeline(seeds, cfg, rt, opts, nullptr);
}

}  // namespace zpd
