#include "zpd/cli.hpp"

#include "zpd/agent_loop.hpp"
#include "zpd/corpus.hpp"
#include "zpd/cost_ledger.hpp"
#include "zpd/engine.hpp"
#include "zpd/evalkit.hpp"
#include "zpd/http_providers.hpp"
#include "zpd/jsonl.hpp"
#include "zpd/mock_providers.hpp"
#include "zpd/prompts.hpp"
#include "zpd/rft_export.hpp"
#include "zpd/toolkit.hpp"
#include "zpd/util.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace zpd::cli {

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
    std::string config_path;
    bool mock = false;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string resume_dir;
    int workers = 0;
    bool allow_quarantine = false;
};

struct Runtime {
    Json config;
    ProviderSet providers;
    std::shared_ptr<Toolkit> toolkit;
    PromptSet prompts;
    EngineConfig engine_cfg;
    IndexConfig index_cfg;
    PriceTable prices;
    RetryPolicy retry;
    CostLedger ledger;
    bool mock = false;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string manifest_hash;

    AgentRuntime agent_runtime() {
        AgentRuntime rt;
        rt.generation = providers.generation.get();
        rt.judge = providers.judge.get();
        rt.rerank = providers.rerank.get();
        rt.embedding = providers.embedding.get();
        rt.toolkit = toolkit.get();
        rt.prompts = &prompts;
        rt.retry = retry;
        rt.ledger = &ledger;
        rt.log = [](const std::string& msg) { std::cerr << "[warn] " << msg << "\n"; };
        return rt;
    }
};

Json default_config() {
    return Json{
        {"engine",
         {{"k_max", 30}, {"n_bon", 3}, {"epsilon", 0.7}, {"bon_short_circuit", true},
          {"max_rounds", 20}}},
        {"index", {{"k_nn", 10}, {"tau_theme", 0.8}}},
        {"sampling", {{"temperature", 0.6}, {"top_p", 0.95}, {"max_tokens", 40960}}},
        {"retry", {{"max_retries", 3}, {"base_delay_ms", 1000}, {"factor", 2.0}}},
        {"providers",
         {{"mode", "mock"},
          {"mock_seed", 0},
          {"generation", {{"base_url", ""}, {"model", ""}, {"api_key_env", "ZPD_API_KEY"}}},
          {"embedding", {{"base_url", ""}, {"model", ""}, {"api_key_env", "ZPD_API_KEY"}}},
          {"rerank", {{"base_url", ""}, {"model", ""}, {"api_key_env", "ZPD_API_KEY"}}}}},
        {"toolkit",
         {{"mode", "mock"},
          {"fixtures_dir", ""},
          {"search_url", ""},
          {"scholar_url", ""},
          {"reader_url", ""},
          {"interpreter", "python3"},
          {"results_per_query", 5},
          {"payload_byte_cap", 16384},
          {"batch_workers", 8},
          {"code_wall_seconds", 30},
          {"code_memory_mb", 512}}},
        {"prices", {{"preset", "browser-per-token"}}},
        {"prompts_dir", ""},
    };
}

Json merge_config(Json base, const Json& overlay) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
            base[it.key()] = merge_config(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
    return base;
}

HttpProviderConfig http_config(const Json& j, const RetryPolicy& retry) {
    HttpProviderConfig cfg;
    cfg.base_url = j.value("base_url", "");
    cfg.model = j.value("model", "");
    cfg.api_key_env = j.value("api_key_env", "");
    cfg.retry = retry;
    if (cfg.base_url.empty())
        throw std::runtime_error("provider base_url missing from config (http mode)");
    return cfg;
}

Runtime make_runtime(const GlobalFlags& flags) {
    Runtime rt;
    Json config = default_config();
    if (!flags.config_path.empty())
        config = merge_config(config, Json::parse(read_file(flags.config_path)));
    if (flags.mock) {
        config["providers"]["mode"] = "mock";
        config["toolkit"]["mode"] = "mock";
    }
    if (flags.seed_given) config["providers"]["mock_seed"] = flags.seed;
    rt.config = config;
    rt.mock = config["providers"]["mode"] == "mock";
    rt.seed = config["providers"]["mock_seed"].get<std::uint64_t>();

#ifdef _OPENMP
    if (flags.workers > 0) omp_set_num_threads(flags.workers);
#endif

    rt.retry.max_retries = config["retry"]["max_retries"].get<int>();
    rt.retry.base_delay_ms = config["retry"]["base_delay_ms"].get<int>();
    rt.retry.factor = config["retry"]["factor"].get<double>();

    std::string prompts_dir = config.value("prompts_dir", "");
    rt.prompts = prompts_dir.empty() ? PromptSet::embedded_defaults() : PromptSet::load(prompts_dir);

    if (rt.mock) {
        rt.providers = make_mock_providers(rt.seed);
    } else {
        auto gen = std::make_shared<HttpGenerationProvider>(
            http_config(config["providers"]["generation"], rt.retry));
        rt.providers.generation = gen;
        rt.providers.embedding = std::make_shared<HttpEmbeddingProvider>(
            http_config(config["providers"]["embedding"], rt.retry));
        rt.providers.rerank = std::make_shared<HttpRerankProvider>(
            http_config(config["providers"]["rerank"], rt.retry));
        rt.providers.judge = std::make_shared<PromptJudgeProvider>(gen, rt.prompts);
    }

    const Json& tk = config["toolkit"];
    ToolkitConfig tk_cfg;
    tk_cfg.results_per_query = tk["results_per_query"].get<int>();
    tk_cfg.payload_byte_cap = tk["payload_byte_cap"].get<std::size_t>();
    tk_cfg.batch_workers = tk["batch_workers"].get<int>();
    tk_cfg.interpreter = tk["interpreter"].get<std::string>();
    tk_cfg.code_limits.wall_seconds = tk["code_wall_seconds"].get<int>();
    tk_cfg.code_limits.memory_bytes = tk["code_memory_mb"].get<std::int64_t>() * 1024 * 1024;

    std::shared_ptr<SearchBackend> search, scholar;
    std::shared_ptr<BrowserFetcher> browser;
    if (tk["mode"] == "mock") {
        std::string fixtures = tk.value("fixtures_dir", "");
        search = std::make_shared<FixtureSearchBackend>(
            fixtures.empty() ? "" : (fs::path(fixtures) / "search").string(), rt.seed);
        scholar = std::make_shared<FixtureSearchBackend>(
            fixtures.empty() ? "" : (fs::path(fixtures) / "search").string(),
            rt.seed ^ 0x5c401a6ull);
        browser = std::make_shared<FixtureBrowserFetcher>(
            fixtures.empty() ? "" : (fs::path(fixtures) / "browser").string());
    } else {
        search = std::make_shared<HttpSearchBackend>(tk["search_url"].get<std::string>(),
                                                     "ZPD_SEARCH_API_KEY", rt.retry);
        scholar = std::make_shared<HttpSearchBackend>(tk["scholar_url"].get<std::string>(),
                                                      "ZPD_SEARCH_API_KEY", rt.retry);
        browser = std::make_shared<HttpBrowserFetcher>(tk["reader_url"].get<std::string>(), rt.retry);
    }
    rt.toolkit = std::make_shared<Toolkit>(search, scholar, browser, rt.providers.generation,
                                           &rt.prompts, tk_cfg);

    rt.engine_cfg = make_engine_config(rt.prompts);
    const Json& eng = config["engine"];
    rt.engine_cfg.k_max = eng["k_max"].get<int>();
    rt.engine_cfg.n_bon = eng["n_bon"].get<int>();
    rt.engine_cfg.epsilon = eng["epsilon"].get<double>();
    rt.engine_cfg.bon_short_circuit = eng["bon_short_circuit"].get<bool>();
    SamplingParams sampling;
    sampling.temperature = config["sampling"]["temperature"].get<double>();
    sampling.top_p = config["sampling"]["top_p"].get<double>();
    sampling.max_tokens = config["sampling"]["max_tokens"].get<int>();
    int max_rounds = eng["max_rounds"].get<int>();
    for (AgentConfig* agent : {&rt.engine_cfg.lkp, &rt.engine_cfg.mko, &rt.engine_cfg.refine}) {
        agent->sampling = sampling;
        agent->max_rounds = max_rounds;
    }
    validate_engine_config(rt.engine_cfg);

    rt.index_cfg.k_nn = config["index"]["k_nn"].get<int>();
    rt.index_cfg.tau_theme = config["index"]["tau_theme"].get<double>();
    validate_index_config(rt.index_cfg);

    std::string preset = config["prices"].value("preset", "browser-per-token");
    rt.prices = preset == "browser-per-kilotoken" ? PriceTable::per_kilotoken_rates()
                                                  : PriceTable::per_token_rates();
    for (const char* key : {"input_token_rate", "output_token_rate", "search_call_rate",
                            "scholar_call_rate", "browser_token_rate"}) {
        if (config["prices"].contains(key)) {
            double v = config["prices"][key].get<double>();
            if (key == std::string("input_token_rate")) rt.prices.input_token_rate = v;
            else if (key == std::string("output_token_rate")) rt.prices.output_token_rate = v;
            else if (key == std::string("search_call_rate")) rt.prices.search_call_rate = v;
            else if (key == std::string("scholar_call_rate")) rt.prices.scholar_call_rate = v;
            else rt.prices.browser_token_rate = v;
        }
    }
    rt.prices.validate();

    rt.config_hash = sha256_hex(config.dump() + "|seed=" + std::to_string(rt.seed));

    Json identity{{"config_hash", rt.config_hash},
                  {"seed", rt.seed},
                  {"mock", rt.mock},
                  {"providers",
                   {{"generation", rt.providers.generation->identity()},
                    {"embedding", rt.providers.embedding->identity()},
                    {"rerank", rt.providers.rerank->identity()},
                    {"judge", rt.providers.judge->identity()}}},
                  {"prompt_revision", rt.prompts.revision()},
                  {"price_preset", rt.prices.preset}};
    rt.manifest_hash = sha256_hex(identity.dump()).substr(0, 16);
    return rt;
}

long now_unix() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void write_manifest(const Runtime& rt, const std::string& run_dir, long started, long finished) {
    Json manifest{{"schema_version", 1},
                  {"config_hash", rt.config_hash},
                  {"seed", rt.seed},
                  {"mock", rt.mock},
                  {"providers",
                   {{"generation", rt.providers.generation->identity()},
                    {"embedding", rt.providers.embedding->identity()},
                    {"rerank", rt.providers.rerank->identity()},
                    {"judge", rt.providers.judge->identity()}}},
                  {"prompt_revision", rt.prompts.revision()},
                  {"price_preset", rt.prices.preset},
                  {"manifest_hash", rt.manifest_hash},
                  // Mock runs pin timestamps so seeded reruns are byte-identical.
                  {"stages",
                   {{"started_unix", rt.mock ? 0 : started}, {"finished_unix", rt.mock ? 0 : finished}}}};
    write_file_atomic((fs::path(run_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

void require_artifact(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw std::runtime_error("missing artifact " + path + " — run `" + producer + "` first");
}

void require_fresh(const std::string& path, bool resume) {
    if (!resume && fs::exists(path))
        throw std::runtime_error("artifact already exists: " + path +
                                 " — stage outputs are immutable; use a new run directory or --resume");
}

// ---- subcommand bodies ----

int cmd_ingest(Runtime& rt, const GlobalFlags& flags, const std::string& corpus_path,
               const std::string& run_dir) {
    fs::create_directories(run_dir);
    std::string out = (fs::path(run_dir) / "chunks.jsonl").string();
    require_fresh(out, !flags.resume_dir.empty());
    auto docs = read_corpus_jsonl(corpus_path);
    auto rt_warn = [](const std::string& m) { std::cerr << "[warn] " << m << "\n"; };
    std::vector<Chunk> chunks;
    for (const auto& doc : docs) {
        auto doc_chunks = chunk_document(doc, rt.providers.generation.get(), rt.prompts, rt.retry,
                                         rt_warn);
        for (auto& c : doc_chunks) chunks.push_back(std::move(c));
    }
    write_chunks_jsonl(out, chunks);
    std::cout << "ingest: " << docs.size() << " documents -> " << chunks.size() << " chunks ("
              << out << ")\n";
    return 0;
}

int cmd_index(Runtime& rt, const GlobalFlags& flags, const std::string& run_dir) {
    std::string chunks_path = (fs::path(run_dir) / "chunks.jsonl").string();
    require_artifact(chunks_path, "ingest");
    std::string out = (fs::path(run_dir) / "embeddings.jsonl").string();
    require_fresh(out, !flags.resume_dir.empty());
    auto chunks = read_chunks_jsonl(chunks_path);
    if (!chunks.empty()) {
        std::vector<std::string> texts;
        for (const auto& c : chunks) texts.push_back(c.text);
        auto vectors = rt.providers.embedding->embed(texts);
        for (std::size_t i = 0; i < chunks.size(); ++i) chunks[i].embedding = vectors[i];
    }
    write_embeddings_jsonl(out, chunks);
    std::cout << "index: embedded " << chunks.size() << " chunks (" << out << ")\n";
    return 0;
}

int cmd_mine(Runtime& rt, const GlobalFlags& flags, const std::string& run_dir) {
    std::string chunks_path = (fs::path(run_dir) / "chunks.jsonl").string();
    std::string embeddings_path = (fs::path(run_dir) / "embeddings.jsonl").string();
    require_artifact(chunks_path, "ingest");
    require_artifact(embeddings_path, "index");
    std::string out = (fs::path(run_dir) / "units.jsonl").string();
    require_fresh(out, !flags.resume_dir.empty());

    auto chunks = read_chunks_jsonl(chunks_path);
    attach_embeddings_jsonl(embeddings_path, chunks);
    std::vector<CompositeUnit> units;
    if (!chunks.empty()) {
        VectorIndex index = VectorIndex::build(chunks);
        units = mine_composite_units(index, rt.index_cfg);
    }
    std::vector<Json> lines;
    for (const auto& u : units)
        lines.push_back({{"chunk_ids", u.chunk_ids}, {"pairwise_sims", u.pairwise_sims}});
    write_jsonl(out, lines);
    std::cout << "mine: " << units.size() << " composite units (" << out << ")\n";
    return 0;
}

int cmd_seed(Runtime& rt, const GlobalFlags& flags, const std::string& run_dir) {
    std::string chunks_path = (fs::path(run_dir) / "chunks.jsonl").string();
    std::string units_path = (fs::path(run_dir) / "units.jsonl").string();
    require_artifact(chunks_path, "ingest");
    require_artifact(units_path, "mine");
    std::string out = (fs::path(run_dir) / "seeds.jsonl").string();
    require_fresh(out, !flags.resume_dir.empty());

    auto chunks = read_chunks_jsonl(chunks_path);
    ChunkStore store(chunks);
    AgentRuntime agent_rt = rt.agent_runtime();
    std::vector<Json> lines;
    for (const auto& uj : read_jsonl(units_path)) {
        CompositeUnit unit;
        auto ids = uj.at("chunk_ids").get<std::vector<std::string>>();
        auto sims = uj.at("pairwise_sims").get<std::vector<double>>();
        std::copy_n(ids.begin(), 3, unit.chunk_ids.begin());
        std::copy_n(sims.begin(), 3, unit.pairwise_sims.begin());
        try {
            lines.push_back(qa_to_json(generate_seed(unit, store, agent_rt)));
        } catch (const std::exception& e) {
            std::cerr << "[warn] seed skipped for unit " << unit.unit_id() << ": " << e.what()
                      << "\n";
        }
    }
    write_jsonl(out, lines);
    std::cout << "seed: " << lines.size() << " seed pairs (" << out << ")\n";
    return 0;
}

int cmd_refine(Runtime& rt, const GlobalFlags& flags, const std::string& run_dir) {
    std::string seeds_path = (fs::path(run_dir) / "seeds.jsonl").string();
    require_artifact(seeds_path, "seed");
    std::string out = (fs::path(run_dir) / "frontier.jsonl").string();
    require_fresh(out, !flags.resume_dir.empty());

    AgentRuntime agent_rt = rt.agent_runtime();
    std::vector<Json> lines;
    for (const auto& sj : read_jsonl(seeds_path)) {
        QaPair seed = qa_from_json(sj);
        FrontierResult frontier = refine_until_frontier(seed, rt.engine_cfg, agent_rt);
        Json chain = Json::array();
        for (const auto& qa : frontier.chain) chain.push_back(qa_to_json(qa));
        lines.push_back({{"seed", qa_to_json(seed)},
                         {"frontier", qa_to_json(frontier.qa)},
                         {"chain", chain},
                         {"iterations", frontier.iterations},
                         {"stop_reason", stop_reason_name(frontier.stop_reason)},
                         {"note", frontier.note},
                         {"manifest_hash", rt.manifest_hash}});
    }
    write_jsonl(out, lines);
    std::cout << "refine: " << lines.size() << " frontier candidates (" << out << ")\n";
    return 0;
}

int cmd_calibrate(Runtime& rt, const GlobalFlags& flags, const std::string& run_dir) {
    std::string frontier_path = (fs::path(run_dir) / "frontier.jsonl").string();
    require_artifact(frontier_path, "refine");
    std::string out = (fs::path(run_dir) / "calibration.jsonl").string();
    require_fresh(out, !flags.resume_dir.empty());

    AgentRuntime agent_rt = rt.agent_runtime();
    ZpdStore store;
    std::map<std::string, std::vector<Json>> partitions;
    for (const char* name : {"pretrain", "zpd", "human", "rejected_duplicate", "quarantine"})
        partitions[name] = {};
    std::vector<Json> records;
    long quarantines = 0;

    for (const auto& fj : read_jsonl(frontier_path)) {
        QaPair frontier = qa_from_json(fj.at("frontier"));
        CalibrationRecord record;
        if (fj.value("stop_reason", "") == "quarantined") {
            record.qa_id = frontier.qa_id;
            record.label = PartitionLabel::quarantine;
            record.note = fj.value("note", "refine-stage quarantine");
        } else {
            record = calibrate(frontier, rt.engine_cfg, agent_rt);
            if (record.label == PartitionLabel::zpd) {
                auto admission =
                    store.admit(frontier, *rt.providers.rerank, rt.engine_cfg.epsilon, rt.retry);
                record.label = admission.label;
                record.nearest_zpd_sim = admission.max_similarity;
            }
        }
        if (record.label == PartitionLabel::quarantine) ++quarantines;
        Json qa_record = qa_to_json(frontier);
        qa_record["label"] = partition_name(record.label);
        qa_record["manifest_hash"] = rt.manifest_hash;
        partitions[partition_name(record.label)].push_back(std::move(qa_record));
        Json rec = calibration_to_json(record);
        rec["manifest_hash"] = rt.manifest_hash;
        records.push_back(std::move(rec));
    }

    for (const auto& [name, lines] : partitions)
        write_jsonl((fs::path(run_dir) / (name + ".jsonl")).string(), lines);
    write_jsonl(out, records);
    std::cout << "calibrate: ";
    for (const auto& [name, lines] : partitions) std::cout << name << "=" << lines.size() << " ";
    std::cout << "(" << out << ")\n";
    return (quarantines > 0 && !flags.allow_quarantine) ? 3 : 0;
}

int cmd_pipeline(Runtime& rt, const GlobalFlags& flags, const std::string& corpus_path,
                 const std::string& run_dir) {
    long started = now_unix();
    require_fresh((fs::path(run_dir) / "report.json").string(), !flags.resume_dir.empty());
    auto docs = read_corpus_jsonl(corpus_path);
    PipelineOptions opts;
    opts.run_dir = run_dir;
    opts.resume = !flags.resume_dir.empty();
    if (opts.resume) {
        // --resume points at a run directory or directly at its checkpoints.
        fs::path given(flags.resume_dir);
        opts.checkpoint_dir =
            fs::exists(given / "checkpoints") ? (given / "checkpoints").string() : given.string();
    }
    opts.manifest_hash = rt.manifest_hash;
    opts.prices = rt.prices;
    AgentRuntime agent_rt = rt.agent_runtime();
    PipelineReport report = run_pipeline(docs, rt.engine_cfg, rt.index_cfg, agent_rt, opts);
    write_manifest(rt, run_dir, started, now_unix());
    std::cout << report.to_json().dump(2) << "\n";
    long quarantines = report.partition_counts.at("quarantine");
    return (quarantines > 0 && !flags.allow_quarantine) ? 3 : 0;
}

int cmd_export_rft(Runtime& rt, const GlobalFlags&, const std::string& run_dir,
                   const std::string& out_dir, long target_rounds, const std::string& mode_name,
                   std::uint64_t sample_seed, long shard_size) {
    std::string zpd_path = (fs::path(run_dir) / "zpd.jsonl").string();
    std::string calibration_path = (fs::path(run_dir) / "calibration.jsonl").string();
    require_artifact(zpd_path, "pipeline (or calibrate)");
    require_artifact(calibration_path, "pipeline (or calibrate)");

    AcceptMode mode = mode_name == "exact" ? AcceptMode::exact_match : AcceptMode::judge;
    std::map<std::string, QaPair> zpd_pairs;
    for (const auto& j : read_jsonl(zpd_path)) {
        QaPair qa = qa_from_json(j);
        zpd_pairs[qa.qa_id] = qa;
    }

    std::vector<Trajectory> accepted;
    std::vector<TrainingSample> samples;
    long candidates = 0, rejected = 0, indeterminate = 0;
    for (const auto& j : read_jsonl(calibration_path)) {
        CalibrationRecord record = calibration_from_json(j);
        auto it = zpd_pairs.find(record.qa_id);
        if (it == zpd_pairs.end()) continue;  // not an admitted ZPD pair
        const QaPair& qa = it->second;
        for (const auto& attempt : record.mko_attempts) {
            ++candidates;
            AcceptOutcome outcome = accept_trajectory(attempt.trajectory, qa.answer, mode,
                                                      rt.providers.judge.get());
            if (outcome == AcceptOutcome::accepted) {
                auto traj_samples = to_training_samples(attempt.trajectory, qa.question, qa.qa_id);
                for (auto& s : traj_samples) {
                    s.sample_id += "#a" + std::to_string(&attempt - record.mko_attempts.data());
                    samples.push_back(std::move(s));
                }
                accepted.push_back(attempt.trajectory);
            } else if (outcome == AcceptOutcome::rejected) {
                ++rejected;
            } else {
                ++indeterminate;
                std::cerr << "[warn] indeterminate judge excluded a trajectory for "
                          << record.qa_id << "\n";
            }
        }
    }

    if (target_rounds > 0)
        samples = normalize_volume(std::move(samples), static_cast<std::size_t>(target_rounds),
                                   sample_seed);

    fs::create_directories(out_dir);
    if (shard_size < 1) shard_size = 8192;
    long shard_count = 0;
    for (std::size_t begin = 0; begin < samples.size() || begin == 0;
         begin += static_cast<std::size_t>(shard_size)) {
        std::vector<Json> lines;
        for (std::size_t i = begin;
             i < samples.size() && i < begin + static_cast<std::size_t>(shard_size); ++i) {
            Json j = training_sample_to_json(samples[i]);
            j["manifest_hash"] = rt.manifest_hash;
            lines.push_back(std::move(j));
        }
        char name[40];
        std::snprintf(name, sizeof(name), "training-%05ld.jsonl", shard_count++);
        write_jsonl((fs::path(out_dir) / name).string(), lines);
        if (samples.empty()) break;
    }

    Json stats_json;
    if (!accepted.empty()) stats_json = dataset_stats_to_json(dataset_stats(accepted));
    stats_json["accepted_trajectories"] = accepted.size();
    stats_json["candidate_trajectories"] = candidates;
    stats_json["rejected"] = rejected;
    stats_json["indeterminate"] = indeterminate;
    stats_json["acceptance_ratio"] =
        candidates ? static_cast<double>(accepted.size()) / candidates : 0.0;
    stats_json["emitted_samples"] = samples.size();
    stats_json["shards"] = shard_count;
    stats_json["manifest_hash"] = rt.manifest_hash;
    write_file_atomic((fs::path(out_dir) / "stats.json").string(), stats_json.dump(2) + "\n");
    std::cout << "export-rft: " << samples.size() << " samples in " << shard_count
              << " shard(s) from " << accepted.size() << "/" << candidates
              << " accepted trajectories (" << out_dir << ")\n";
    return 0;
}

int cmd_exam_build(Runtime& rt, const GlobalFlags&, const std::string& candidates_path,
                   const std::string& run_dir) {
    fs::create_directories(run_dir);
    AgentRuntime agent_rt = rt.agent_runtime();

    AgentConfig untooled = rt.engine_cfg.lkp;
    untooled.name = "exam-baseline";
    AgentConfig tooled = rt.engine_cfg.mko;
    tooled.name = "exam-baseline";

    ZpdStore dedup_store;
    std::vector<Json> included, all_candidates;
    for (const auto& j : read_jsonl(candidates_path)) {
        QaPair qa = qa_from_json(j);
        ExamCandidate candidate = exam_filter(qa, untooled, tooled, agent_rt);
        if (candidate.decision == ExamDecision::include) {
            // The exam set reuses the pipeline's dedup filter before sampling.
            auto admission =
                dedup_store.admit(qa, *rt.providers.rerank, rt.engine_cfg.epsilon, rt.retry);
            if (admission.label != PartitionLabel::zpd)
                candidate.decision = ExamDecision::exclude;
        }
        Json cj = exam_candidate_to_json(candidate);
        cj["manifest_hash"] = rt.manifest_hash;
        all_candidates.push_back(cj);
        if (candidate.decision == ExamDecision::include) included.push_back(std::move(cj));
    }
    write_jsonl((fs::path(run_dir) / "exam.jsonl").string(), included);
    write_jsonl((fs::path(run_dir) / "exam_attempts.jsonl").string(), all_candidates);
    std::cout << "exam-build: included " << included.size() << " of " << all_candidates.size()
              << " candidates (" << run_dir << ")\n";
    return 0;
}

int cmd_evaluate(Runtime& rt, const GlobalFlags&, const std::string& answers_path,
                 const std::string& gold_path, const std::string& attempts_path,
                 const std::string& out_path, const std::string& benchmark) {
    std::map<std::string, std::string> answers, gold;
    for (const auto& j : read_jsonl(answers_path))
        answers[j.at("question").get<std::string>()] = j.at("response").get<std::string>();
    for (const auto& j : read_jsonl(gold_path))
        gold[j.at("question").get<std::string>()] = j.at("answer").get<std::string>();

    ScoreResult score = score_run(answers, gold, *rt.providers.judge);
    Json metrics{{"accuracy", score.accuracy},
                 {"questions", answers.size()},
                 {"indeterminate", score.indeterminate_count},
                 {"manifest_hash", rt.manifest_hash}};

    if (!attempts_path.empty()) {
        AttemptMatrix matrix;
        for (const auto& j : read_jsonl(attempts_path)) {
            matrix.question_ids.push_back(j.at("question_id").get<std::string>());
            matrix.cells.push_back(j.at("results").get<std::vector<bool>>());
        }
        metrics["pass_at_n"] = pass_curve_to_json(pass_at_n(matrix));
    }

    Json report{{benchmark, metrics}};  // metrics are keyed by benchmark name
    write_file_atomic(out_path, report.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_report(Runtime&, const GlobalFlags&, const std::string& run_dir) {
    std::string report_path = (fs::path(run_dir) / "report.json").string();
    require_artifact(report_path, "pipeline");
    Json report = Json::parse(read_file(report_path));

    // Recount the partition files; the report must agree.
    for (const char* name : {"pretrain", "zpd", "human", "rejected_duplicate", "quarantine"}) {
        std::string path = (fs::path(run_dir) / (std::string(name) + ".jsonl")).string();
        long count = fs::exists(path) ? static_cast<long>(read_jsonl(path).size()) : 0;
        long reported = report.at("partition_counts").value(name, -1l);
        if (count != reported)
            throw std::runtime_error("report/partition mismatch for " + std::string(name) + ": " +
                                     std::to_string(reported) + " reported vs " +
                                     std::to_string(count) + " on disk");
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"ZPD data-synthesis pipeline: seed mining, agentic escalation, LKP/MKO "
                 "calibration, dataset export, and evaluation"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags are valid after the subcommand name too

    GlobalFlags flags;
    app.add_option("--config", flags.config_path, "Config file (JSON)")->expected(1);
    app.add_flag("--mock", flags.mock, "Force deterministic mock providers and fixture tools");
    auto* seed_opt = app.add_option("--seed", flags.seed, "RNG seed for mock providers");
    app.add_option("--resume", flags.resume_dir, "Resume from an existing run directory");
    app.add_option("--workers", flags.workers, "Worker threads (default: hardware)");
    app.add_flag("--allow-quarantine", flags.allow_quarantine,
                 "Exit 0 even when candidates were quarantined");

    std::string corpus_path, run_dir, out_dir, candidates_path, answers_path, gold_path,
        attempts_path, out_path, mode_name = "judge", benchmark = "default";
    long target_rounds = 0, shard_size = 8192;
    std::uint64_t sample_seed = 0;

    auto* ingest = app.add_subcommand("ingest", "Chunk a raw document corpus");
    ingest->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
    ingest->add_option("--run", run_dir, "Run directory")->required();

    auto* index = app.add_subcommand("index", "Embed chunks into the vector sidecar");
    index->add_option("--run", run_dir, "Run directory")->required();

    auto* mine = app.add_subcommand("mine", "Mine thematically coherent composite units");
    mine->add_option("--run", run_dir, "Run directory")->required();

    auto* seed_cmd = app.add_subcommand("seed", "Generate seed QA pairs from composite units");
    seed_cmd->add_option("--run", run_dir, "Run directory")->required();

    auto* refine = app.add_subcommand("refine", "Escalate seeds to the LKP frontier");
    refine->add_option("--run", run_dir, "Run directory")->required();

    auto* calibrate_cmd = app.add_subcommand("calibrate", "LKP/MKO calibration and admission");
    calibrate_cmd->add_option("--run", run_dir, "Run directory")->required();

    auto* pipeline = app.add_subcommand("pipeline", "Run all stages end to end");
    pipeline->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
    pipeline->add_option("--run", run_dir, "Run directory")->required();

    auto* export_rft = app.add_subcommand("export-rft", "Emit rejection-sampled training data");
    export_rft->add_option("--run", run_dir, "Run directory holding calibration outputs")
        ->required();
    export_rft->add_option("--out", out_dir, "Output directory")->required();
    export_rft->add_option("--target-rounds", target_rounds, "Subsample to this many samples");
    export_rft->add_option("--mode", mode_name, "Acceptance mode: judge|exact")
        ->check(CLI::IsMember({"judge", "exact"}));
    export_rft->add_option("--sample-seed", sample_seed, "Subsampling seed");
    export_rft->add_option("--shard-size", shard_size, "Samples per output shard");

    auto* exam_build = app.add_subcommand("exam-build", "Dual-constraint exam filtering");
    exam_build->add_option("--candidates", candidates_path, "Candidate QA JSONL")->required();
    exam_build->add_option("--run", run_dir, "Run directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Judge-based scoring (and pass@N curves)");
    evaluate->add_option("--answers", answers_path, "Answers JSONL {question, response}")
        ->required();
    evaluate->add_option("--gold", gold_path, "Gold JSONL {question, answer}")->required();
    evaluate->add_option("--attempts", attempts_path, "Attempt matrix JSONL");
    evaluate->add_option("--out", out_path, "Metrics JSON output path")->required();
    evaluate->add_option("--benchmark", benchmark, "Benchmark name keying the metrics report");

    auto* report = app.add_subcommand("report", "Print and validate a finished run's report");
    report->add_option("--run", run_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    flags.seed_given = seed_opt->count() > 0;

    try {
        Runtime rt = make_runtime(flags);
        if (ingest->parsed()) return cmd_ingest(rt, flags, corpus_path, run_dir);
        if (index->parsed()) return cmd_index(rt, flags, run_dir);
        if (mine->parsed()) return cmd_mine(rt, flags, run_dir);
        if (seed_cmd->parsed()) return cmd_seed(rt, flags, run_dir);
        if (refine->parsed()) return cmd_refine(rt, flags, run_dir);
        if (calibrate_cmd->parsed()) return cmd_calibrate(rt, flags, run_dir);
        if (pipeline->parsed()) return cmd_pipeline(rt, flags, corpus_path, run_dir);
        if (export_rft->parsed())
            return cmd_export_rft(rt, flags, run_dir, out_dir, target_rounds, mode_name,
                                  sample_seed, shard_size);
        if (exam_build->parsed()) return cmd_exam_build(rt, flags, candidates_path, run_dir);
        if (evaluate->parsed())
            return cmd_evaluate(rt, flags, answers_path, gold_path, attempts_path, out_path,
                                benchmark);
        if (report->parsed()) return cmd_report(rt, flags, run_dir);
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.push_back("zpdgen");
    for (const auto& a : args) storage.push_back(a);
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace zpd::cli
