#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "zpd/engine.hpp"
#include "zpd/jsonl.hpp"
#include "zpd/mock_providers.hpp"
#include "zpd/util.hpp"

#include "support/scripted.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace zpd;
using zpd::test::ScriptedGeneration;
using zpd::test::ScriptedJudge;
using zpd::test::ScriptedRerank;

namespace {

namespace fs = std::filesystem;

const std::string kFixturesDir = ZPD_FIXTURES_DIR;

std::string test_gold(const std::string& question) {
    return "key-" + std::to_string(fnv1a64(normalize_answer(question)) % 100000);
}

int depth_of(const std::string& question) {
    int depth = 0;
    std::size_t at = 0;
    while ((at = question.find("deeper", at)) != std::string::npos) {
        ++depth;
        at += 6;
    }
    return depth;
}

// Scripted engine world: behavior is keyed on markers in the question text.
//   ptype: LKP always solves.  ztype/dtype: LKP fails once depth >= 1.
//   htype: LKP never solves, MKO never solves.  qtype: judge is indeterminate.
std::string scripted_engine_model(std::span<const ChatMessage> messages) {
    std::string system = messages.front().content;
    std::string user = messages.back().content;

    if (ifind(system, marker::refine_role) != std::string::npos) {
        std::string pair_text = find_section(user, marker::pair_section).value_or("{}");
        Json pair = Json::parse(pair_text);
        std::string refined = pair.at("question").get<std::string>() + " deeper";
        Json out{{"question", refined},
                 {"answer", test_gold(refined)},
                 {"dimensions", Json::array({"factual_grounding"})}};
        return "Refined.\nFinal Answer: " + out.dump();
    }

    std::string question = find_section(user, marker::question_header).value_or("");
    if (ifind(system, marker::untooled_agent_role) != std::string::npos) {
        bool solves = question.find("ptype") != std::string::npos ||
                      ((question.find("ztype") != std::string::npos ||
                        question.find("dtype") != std::string::npos) &&
                       depth_of(question) < 1);
        return "Thinking.\nFinal Answer: " +
               (solves ? test_gold(question) : std::string("no idea"));
    }
    if (ifind(system, marker::tooled_agent_role) != std::string::npos) {
        bool solves = question.find("htype") == std::string::npos;
        return "Researched.\nFinal Answer: " +
               (solves ? test_gold(question) : std::string("wrong-answer"));
    }
    return "unused";
}

struct TestWorld {
    ScriptedGeneration generation{scripted_engine_model};
    ScriptedJudge judge{[](const std::string& question, const std::string& response,
                           const std::string& gold) -> JudgeVerdict {
        if (question.find("qtype") != std::string::npos)
            throw JudgeParseError("scripted indeterminate judge", "raw reply");
        JudgeVerdict v;
        v.correct = normalize_answer(response) == normalize_answer(gold);
        v.extracted_final_answer = response;
        return v;
    }};
    ScriptedRerank rerank{[](const std::string& q, const std::string& c) {
        return (q.find("dupgroup") != std::string::npos && c.find("dupgroup") != std::string::npos)
                   ? 1.0
                   : 0.0;
    }};
    PromptSet prompts = PromptSet::embedded_defaults();
    CostLedger ledger;
    ProviderSet mock = make_mock_providers(1);
    Toolkit toolkit{std::make_shared<FixtureSearchBackend>(kFixturesDir + "/search", 1),
                    std::make_shared<FixtureSearchBackend>(kFixturesDir + "/search", 2),
                    std::make_shared<FixtureBrowserFetcher>(kFixturesDir + "/browser"),
                    mock.generation, &prompts};

    EngineConfig cfg = make_engine_config(prompts);
    TestWorld() {
        cfg.k_max = 4;  // small cap keeps scripted loops quick
    }

    AgentRuntime runtime() {
        AgentRuntime rt;
        rt.generation = &generation;
        rt.judge = &judge;
        rt.rerank = &rerank;
        rt.toolkit = &toolkit;
        rt.prompts = &prompts;
        rt.retry = {0, 0, 2.0};
        rt.ledger = &ledger;
        return rt;
    }
};

QaPair make_seed(const std::string& id, const std::string& question) {
    QaPair qa;
    qa.qa_id = id;
    qa.question = question;
    qa.answer = test_gold(question);
    qa.lineage.seed_unit_id = "unit-" + id;
    qa.lineage.iteration = 0;
    return qa;
}

CompositeUnit unit_of(const std::string& a, const std::string& b, const std::string& c) {
    CompositeUnit u{{a, b, c}, {0.9, 0.9, 0.9}};
    std::sort(u.chunk_ids.begin(), u.chunk_ids.end());
    return u;
}

}  // namespace

TEST_CASE("qa validation enforces lineage and non-empty text") {
    QaPair qa = make_seed("q1", "question ztype");
    CHECK_NOTHROW(validate_qa(qa));
    qa.lineage.parent = "p";  // iteration 0 with a parent is inconsistent
    CHECK_THROWS_AS(validate_qa(qa), std::invalid_argument);
    qa.lineage.parent.reset();
    qa.answer = " ";
    CHECK_THROWS_AS(validate_qa(qa), std::invalid_argument);

    QaPair back = qa_from_json(qa_to_json(make_seed("q2", "another ztype")));
    CHECK(back.qa_id == "q2");
    CHECK(back.lineage.iteration == 0);
    CHECK_FALSE(back.lineage.parent.has_value());
}

TEST_CASE("generate_seed: deterministic template output, lineage, and missing-chunk errors") {
    auto providers = make_mock_providers(13);
    PromptSet prompts = PromptSet::embedded_defaults();
    AgentRuntime rt;
    rt.generation = providers.generation.get();
    rt.prompts = &prompts;
    rt.retry = {0, 0, 2.0};

    std::vector<Chunk> chunks;
    for (int i = 0; i < 30; ++i)
        chunks.push_back({"c" + std::to_string(i), "d", "chunk body " + std::to_string(i),
                          std::nullopt});
    ChunkStore store(chunks);

    auto unit = unit_of("c0", "c1", "c2");
    QaPair a = generate_seed(unit, store, rt);
    QaPair b = generate_seed(unit, store, rt);
    CHECK(a.qa_id == b.qa_id);
    CHECK(a.question == b.question);
    CHECK(a.answer == b.answer);
    CHECK(a.lineage.iteration == 0);
    CHECK(a.lineage.seed_unit_id == unit.unit_id());
    CHECK_FALSE(a.lineage.parent.has_value());

    auto missing = unit_of("c0", "c1", "c-deleted");
    try {
        generate_seed(missing, store, rt);
        FAIL("expected missing-chunk error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("c-deleted") != std::string::npos);
    }

    std::set<std::string> ids;
    for (int i = 0; i < 10; ++i)
        ids.insert(generate_seed(unit_of("c" + std::to_string(3 * i),
                                         "c" + std::to_string(3 * i + 1),
                                         "c" + std::to_string(3 * i + 2)),
                                 store, rt)
                       .qa_id);
    CHECK(ids.size() == 10);
}

TEST_CASE("escalate_once: child extends the question, lineage links to the parent") {
    TestWorld world;
    auto rt = world.runtime();
    QaPair parent = make_seed("s1", "base question ztype");
    QaPair child = escalate_once(parent, world.cfg, rt);
    CHECK(child.question.size() > parent.question.size());
    CHECK(child.lineage.iteration == 1);
    CHECK(child.lineage.parent.value() == parent.qa_id);
    CHECK(child.lineage.seed_unit_id == parent.lineage.seed_unit_id);
    CHECK(child.dimension_tags.count(Dimension::factual_grounding) == 1);
    CHECK(child.qa_id != parent.qa_id);
}

TEST_CASE("escalate_once: two parse failures become a step error; the parent is untouched") {
    TestWorld world;
    ScriptedGeneration broken([](std::span<const ChatMessage>) {
        return std::string("Final Answer: this is not json");
    });
    auto rt = world.runtime();
    rt.generation = &broken;
    QaPair parent = make_seed("s1", "question ztype");
    QaPair copy = parent;
    CHECK_THROWS_AS(escalate_once(parent, world.cfg, rt), EscalationStepError);
    CHECK(broken.calls == 2);  // the single reprompt happened
    CHECK(parent.qa_id == copy.qa_id);
    CHECK(parent.question == copy.question);
}

TEST_CASE("is_solvable_by: verbatim answer solves; aborted trajectory does not") {
    TestWorld world;
    auto rt = world.runtime();
    QaPair qa = make_seed("s1", "a ptype question");

    ProbeResult probe = is_solvable_by(world.cfg.lkp, qa, rt, Phase::refinement);
    CHECK(probe.status == ProbeStatus::solved);
    CHECK(probe.trajectory.rounds.size() == 1);
    REQUIRE(probe.verdict.has_value());
    CHECK(probe.verdict->correct);

    ScriptedGeneration dead([](std::span<const ChatMessage>) -> std::string {
        throw ProviderError("down", false);
    });
    rt.generation = &dead;
    ProbeResult aborted = is_solvable_by(world.cfg.lkp, qa, rt, Phase::refinement);
    CHECK(aborted.status == ProbeStatus::unsolved);
    CHECK(aborted.trajectory.aborted);
    CHECK_FALSE(aborted.verdict.has_value());
}

TEST_CASE("is_solvable_by: tool access flips the outcome on the same pair") {
    TestWorld world;
    auto rt = world.runtime();
    // htype-free, depth >= 1: the scripted LKP fails while the MKO succeeds.
    QaPair qa = make_seed("s1", "ztype question already deeper");

    ProbeResult untooled = is_solvable_by(world.cfg.lkp, qa, rt, Phase::verification);
    ProbeResult tooled = is_solvable_by(world.cfg.mko, qa, rt, Phase::verification);
    CHECK(untooled.status == ProbeStatus::unsolved);
    CHECK(tooled.status == ProbeStatus::solved);
}

TEST_CASE("refine_until_frontier: pre-check stops an already-unsolvable seed at zero") {
    TestWorld world;
    auto rt = world.runtime();
    auto result = refine_until_frontier(make_seed("s1", "htype hopeless"), world.cfg, rt);
    CHECK(result.iterations == 0);
    CHECK(result.stop_reason == StopReason::lkp_failed);
    CHECK(result.qa.lineage.iteration == 0);
    CHECK(result.chain.size() == 1);
}

TEST_CASE("refine_until_frontier: an always-solving LKP stops at exactly k_max") {
    TestWorld world;
    auto rt = world.runtime();
    auto result = refine_until_frontier(make_seed("s1", "ptype easy"), world.cfg, rt);
    CHECK(result.iterations == world.cfg.k_max);
    CHECK(result.stop_reason == StopReason::k_max);
    CHECK(result.qa.lineage.iteration == world.cfg.k_max);
}

TEST_CASE("refine_until_frontier: scripted failure at depth 1 leaves a two-link chain") {
    TestWorld world;
    auto rt = world.runtime();
    QaPair seed = make_seed("s1", "ztype base");
    auto result = refine_until_frontier(seed, world.cfg, rt);
    CHECK(result.iterations == 1);
    CHECK(result.stop_reason == StopReason::lkp_failed);
    REQUIRE(result.chain.size() == 2);
    CHECK(result.chain[0].qa_id == seed.qa_id);
    CHECK(result.chain[1].lineage.parent.value() == seed.qa_id);
    CHECK(result.qa.lineage.iteration == 1);

    // A seed at nonzero iteration is rejected up front.
    CHECK_THROWS_AS(refine_until_frontier(result.qa, world.cfg, rt), std::invalid_argument);
}

TEST_CASE("refine_until_frontier: three consecutive escalation failures quarantine the seed") {
    TestWorld world;
    int refine_calls = 0;
    ScriptedGeneration flaky_refine([&](std::span<const ChatMessage> messages) -> std::string {
        std::string system = messages.front().content;
        if (ifind(system, marker::refine_role) != std::string::npos) {
            ++refine_calls;
            return "Final Answer: broken not json";
        }
        return scripted_engine_model(messages);
    });
    auto rt = world.runtime();
    rt.generation = &flaky_refine;
    auto result = refine_until_frontier(make_seed("s1", "ptype easy"), world.cfg, rt);
    CHECK(result.stop_reason == StopReason::quarantined);
    CHECK(refine_calls == 6);  // 3 step attempts x (1 try + 1 reprompt)
    CHECK(result.note.find("escalation failed") != std::string::npos);
}

TEST_CASE("calibrate: LKP-solvable pairs go to pretrain without MKO attempts") {
    TestWorld world;
    auto rt = world.runtime();
    CalibrationRecord record = calibrate(make_seed("s1", "ptype easy"), world.cfg, rt);
    CHECK(record.label == PartitionLabel::pretrain);
    CHECK(record.lkp_solvable.value());
    CHECK(record.mko_attempts.empty());
}

TEST_CASE("calibrate: BoN short-circuits on the first correct attempt; full-N mode runs all") {
    TestWorld world;
    // The MKO succeeds only on attempt 2 (keyed on the attempt tag).
    ScriptedGeneration attempt_keyed([&](std::span<const ChatMessage> messages) -> std::string {
        std::string system = messages.front().content;
        std::string user = messages.back().content;
        if (ifind(system, marker::tooled_agent_role) != std::string::npos &&
            ifind(system, marker::refine_role) == std::string::npos) {
            std::string question = find_section(user, marker::question_header).value_or("");
            bool second = system.find("attempt 2 of") != std::string::npos;
            return "Final Answer: " + (second ? test_gold(question) : std::string("miss"));
        }
        return scripted_engine_model(messages);
    });
    auto rt = world.runtime();
    rt.generation = &attempt_keyed;

    QaPair qa = make_seed("s1", "ztype deeper thing");
    CalibrationRecord record = calibrate(qa, world.cfg, rt);
    CHECK(record.label == PartitionLabel::zpd);
    CHECK_FALSE(record.lkp_solvable.value());
    CHECK(record.mko_attempts.size() == 2);  // short-circuit after the hit

    world.cfg.bon_short_circuit = false;
    CalibrationRecord full = calibrate(qa, world.cfg, rt);
    CHECK(full.label == PartitionLabel::zpd);
    CHECK(full.mko_attempts.size() == 3);  // statistics-parity mode runs all N
}

TEST_CASE("calibrate: zero correct MKO attempts route to human review") {
    TestWorld world;
    auto rt = world.runtime();
    CalibrationRecord record = calibrate(make_seed("s1", "htype hard deeper"), world.cfg, rt);
    CHECK(record.label == PartitionLabel::human);
    CHECK(record.mko_attempts.size() == 3);
    for (const auto& attempt : record.mko_attempts) {
        REQUIRE(attempt.verdict.has_value());
        CHECK_FALSE(attempt.verdict->correct);
    }
}

TEST_CASE("calibrate: an indeterminate judge quarantines instead of dropping") {
    TestWorld world;
    auto rt = world.runtime();
    CalibrationRecord record = calibrate(make_seed("s1", "qtype mystery"), world.cfg, rt);
    CHECK(record.label == PartitionLabel::quarantine);
    CHECK_FALSE(record.note.empty());
}

TEST_CASE("admission: empty store admits; verbatim duplicates are rejected") {
    ZpdStore store;
    MockRerank rerank;
    QaPair first = make_seed("s1", "completely original phrasing");
    auto result = store.admit(first, rerank, 0.7);
    CHECK(result.label == PartitionLabel::zpd);
    CHECK(result.max_similarity == 0.0);

    QaPair dup = make_seed("s2", "completely original phrasing");
    auto rejected = store.admit(dup, rerank, 0.7);
    CHECK(rejected.label == PartitionLabel::rejected_duplicate);
    CHECK(rejected.max_similarity == doctest::Approx(1.0));
    CHECK(store.admitted().size() == 1);
}

TEST_CASE("admission retries transient rerank failures instead of skipping the check") {
    ZpdStore store;
    int failures_left = 2;
    ScriptedRerank flaky([&](const std::string&, const std::string&) -> double {
        if (failures_left-- > 0) throw ProviderError("rerank outage", true);
        return 0.0;
    });
    CHECK(store.admit(make_seed("s1", "first in"), flaky, 0.7, {3, 0, 2.0}).label ==
          PartitionLabel::zpd);
    CHECK(store.admit(make_seed("s2", "unrelated follow-up"), flaky, 0.7, {3, 0, 2.0}).label ==
          PartitionLabel::zpd);  // succeeded after two retries
    CHECK(store.admitted().size() == 2);

    // Persistent failure propagates; the candidate is never silently admitted.
    ScriptedRerank dead([](const std::string&, const std::string&) -> double {
        throw ProviderError("rerank gone", true);
    });
    CHECK_THROWS_AS(store.admit(make_seed("s3", "third thing"), dead, 0.7, {1, 0, 2.0}),
                    ProviderError);
    CHECK(store.admitted().size() == 2);
}

TEST_CASE("admission boundary: 0.69 admitted, 0.70 rejected under the overlap mock") {
    ZpdStore store;
    MockRerank rerank;
    auto tokens = [](int shared, int unique, const std::string& tag) {
        std::string text;
        for (int i = 0; i < shared; ++i) text += "a" + std::to_string(i) + " ";
        for (int i = 0; i < unique; ++i) text += tag + std::to_string(i) + " ";
        return text;
    };
    QaPair base = make_seed("s1", tokens(100, 0, ""));
    CHECK(store.admit(base, rerank, 0.7).label == PartitionLabel::zpd);

    QaPair at_069 = make_seed("s2", tokens(69, 31, "b"));
    CHECK(rerank.rerank_similarity(at_069.question, base.question) == doctest::Approx(0.69));
    auto admitted = store.admit(at_069, rerank, 0.7);
    CHECK(admitted.label == PartitionLabel::zpd);
    CHECK(admitted.max_similarity == doctest::Approx(0.69));

    QaPair at_070 = make_seed("s3", tokens(70, 30, "c"));
    CHECK(rerank.rerank_similarity(at_070.question, base.question) == doctest::Approx(0.70));
    CHECK(store.admit(at_070, rerank, 0.7).label == PartitionLabel::rejected_duplicate);
}

TEST_CASE("run_seed_pipeline routes a hand-enumerated table across all five outcomes") {
    TestWorld world;
    auto rt = world.runtime();

    std::vector<QaPair> seeds{
        make_seed("seed-0", "ptype trivially known fact"),
        make_seed("seed-1", "ztype dupgroup question one"),
        make_seed("seed-2", "dtype dupgroup question two"),
        make_seed("seed-3", "htype impossible even with tools"),
        make_seed("seed-4", "qtype judge cannot read this"),
        make_seed("seed-5", "ztype standalone question"),
    };
    std::vector<std::string> expected{"pretrain", "zpd", "rejected_duplicate",
                                      "human", "quarantine", "zpd"};

    fs::path dir = fs::temp_directory_path() / "zpd-engine-pipe";
    fs::remove_all(dir);
    PipelineOptions opts;
    opts.run_dir = dir.string();
    opts.manifest_hash = "test-manifest";
    std::vector<SeedOutcome> outcomes;
    PipelineReport report = run_seed_pipeline(seeds, world.cfg, rt, opts, &outcomes);

    REQUIRE(outcomes.size() == seeds.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i)
        CHECK(partition_name(outcomes[i].record.label) == expected[i]);

    CHECK(report.seed_count == 6);
    CHECK(report.partition_counts.at("pretrain") == 1);
    CHECK(report.partition_counts.at("zpd") == 2);
    CHECK(report.partition_counts.at("rejected_duplicate") == 1);
    CHECK(report.partition_counts.at("human") == 1);
    CHECK(report.partition_counts.at("quarantine") == 1);

    // Routing exclusivity: the partition counts cover every seed exactly once.
    long total = 0;
    for (const auto& [_, count] : report.partition_counts) total += count;
    CHECK(total == report.seed_count);

    // Invariants over the records.
    for (const auto& outcome : outcomes) {
        if (outcome.record.lkp_solvable && *outcome.record.lkp_solvable)
            CHECK(outcome.record.mko_attempts.empty());
        CHECK(outcome.iterations <= world.cfg.k_max);
        CHECK((outcome.stop_reason == StopReason::k_max) ==
              (outcome.iterations == world.cfg.k_max));
        // Lineage integrity: chains start at an iteration-0 seed bound to a unit.
        REQUIRE(!outcome.chain.empty());
        CHECK(outcome.chain.front().lineage.iteration == 0);
        CHECK_FALSE(outcome.chain.front().lineage.seed_unit_id.empty());
        for (std::size_t i = 1; i < outcome.chain.size(); ++i) {
            CHECK(outcome.chain[i].lineage.parent.value() == outcome.chain[i - 1].qa_id);
            CHECK(outcome.chain[i].lineage.iteration == static_cast<int>(i));
        }
    }

    // The partition files and calibration sidecar landed in the run dir.
    CHECK(fs::exists(dir / "zpd.jsonl"));
    CHECK(read_jsonl((dir / "zpd.jsonl").string()).size() == 2);
    CHECK(read_jsonl((dir / "calibration.jsonl").string()).size() == 6);
    CHECK(fs::exists(dir / "report.json"));
    fs::remove_all(dir);
}

TEST_CASE("pipeline determinism and checkpoint resume produce identical outputs") {
    auto run_once = [&](const std::string& dir, bool resume) {
        TestWorld world;
        auto rt = world.runtime();
        std::vector<QaPair> seeds;
        for (int i = 0; i < 8; ++i)
            seeds.push_back(make_seed("seed-" + std::to_string(i),
                                      (i % 3 == 0 ? "ptype " : "ztype ") + std::string("q") +
                                          std::to_string(i)));
        PipelineOptions opts;
        opts.run_dir = dir;
        opts.resume = resume;
        opts.manifest_hash = "m";
        return run_seed_pipeline(seeds, world.cfg, rt, opts, nullptr);
    };

    fs::path base = fs::temp_directory_path() / "zpd-engine-det";
    fs::remove_all(base);
    fs::path dir_a = base / "a", dir_b = base / "b", dir_c = base / "c";
    run_once(dir_a.string(), false);
    run_once(dir_b.string(), false);

    auto slurp = [](const fs::path& p) { return read_file(p.string()); };
    for (const char* name : {"pretrain.jsonl", "zpd.jsonl", "human.jsonl",
                             "rejected_duplicate.jsonl", "quarantine.jsonl", "calibration.jsonl",
                             "report.json", "cost_audit.jsonl"})
        CHECK(slurp(dir_a / name) == slurp(dir_b / name));

    // Truncate the checkpoint to half the seeds and resume: identical report.
    fs::create_directories(dir_c / "checkpoints");
    auto progress = read_jsonl_tolerant((dir_a / "checkpoints" / "progress.jsonl").string());
    std::ofstream partial((dir_c / "checkpoints" / "progress.jsonl").string());
    for (std::size_t i = 0; i < progress.size() / 2; ++i) partial << progress[i].dump() << "\n";
    partial.close();
    run_once(dir_c.string(), true);
    for (const char* name : {"report.json", "zpd.jsonl", "pretrain.jsonl", "cost_audit.jsonl"})
        CHECK(slurp(dir_a / name) == slurp(dir_c / name));
    fs::remove_all(base);
}

TEST_CASE("run_pipeline over an empty corpus yields a valid, empty report") {
    TestWorld world;
    auto providers = make_mock_providers(1);
    auto rt = world.runtime();
    rt.embedding = providers.embedding.get();

    fs::path dir = fs::temp_directory_path() / "zpd-engine-empty";
    fs::remove_all(dir);
    PipelineOptions opts;
    opts.run_dir = dir.string();
    PipelineReport report = run_pipeline({}, world.cfg, {10, 0.8}, rt, opts);
    CHECK(report.seed_count == 0);
    for (const auto& [_, count] : report.partition_counts) CHECK(count == 0);
    CHECK(fs::exists(dir / "report.json"));
    fs::remove_all(dir);
}

TEST_CASE("trajectory usage maps onto the right ledger counters") {
    Trajectory traj;
    traj.question = "q";
    traj.llm_calls = 3;
    traj.usage_estimated = true;
    for (int j = 1; j <= 3; ++j) {
        Round r;
        r.index = j;
        r.report = "r";
        r.input_tokens = 100;
        r.output_tokens = 40;
        traj.rounds.push_back(r);
    }
    auto add = [&](int round, Tool tool, long tokens) {
        ToolCall call;
        call.tool = tool;
        call.arguments = tool == Tool::code
                             ? Json{{"script", "print(1)"}}
                             : tool == Tool::browser
                                   ? Json{{"url", "https://x.test/"}, {"goal", "g"}}
                                   : Json{{"query", Json::array({"q"})}};
        Observation obs;
        obs.tool = tool;
        obs.payload = Json::object();
        obs.tokens_consumed = tokens;
        traj.rounds[static_cast<std::size_t>(round)].tool_calls.push_back(call);
        traj.rounds[static_cast<std::size_t>(round)].observations.push_back(obs);
    };
    add(0, Tool::search, 50);
    add(0, Tool::scholar, 60);
    add(1, Tool::browser, 10000);  // browser is priced per observed token
    add(2, Tool::code, 70);        // code runs locally, counted but free

    CostLedger ledger;
    AgentRuntime rt;
    rt.ledger = &ledger;
    record_trajectory_cost(rt, Phase::verification, traj);

    auto totals = ledger.totals(Phase::verification);
    CHECK(totals.llm_calls == 3);
    CHECK(totals.input_tokens == 300);
    CHECK(totals.output_tokens == 120);
    CHECK(totals.search_calls == 1);
    CHECK(totals.scholar_calls == 1);
    CHECK(totals.browser_tokens == 10000);
    CHECK(totals.code_calls == 1);
    CHECK(ledger.totals(Phase::refinement).llm_calls == 0);
    REQUIRE(ledger.events().size() == 1);
    CHECK(ledger.events()[0].second.estimated);  // the estimate flag reaches the audit log

    CostReport cost = total_cost(ledger, PriceTable::per_token_rates());
    CHECK(cost.verification.browser_cost == doctest::Approx(10000 * 0.00005));
    CHECK(cost.verification.search_cost == doctest::Approx(0.00275));
    CHECK(cost.verification.scholar_cost == doctest::Approx(0.00275));
}

TEST_CASE("engine config validation enforces persona tool settings and defaults") {
    PromptSet prompts = PromptSet::embedded_defaults();
    EngineConfig cfg = make_engine_config(prompts);
    CHECK(cfg.k_max == 30);
    CHECK(cfg.n_bon == 3);
    CHECK(cfg.epsilon == doctest::Approx(0.7));
    CHECK_FALSE(cfg.lkp.tools_enabled);
    CHECK(cfg.mko.tools_enabled);
    CHECK_NOTHROW(validate_engine_config(cfg));

    EngineConfig bad = cfg;
    bad.lkp.tools_enabled = true;
    CHECK_THROWS_AS(validate_engine_config(bad), std::invalid_argument);
    bad = cfg;
    bad.epsilon = 1.5;
    CHECK_THROWS_AS(validate_engine_config(bad), std::invalid_argument);
}
