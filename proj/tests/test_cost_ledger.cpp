#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "zpd/cost_ledger.hpp"
#include "zpd/util.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <thread>

using namespace zpd;

TEST_CASE("recording increments counters; duplicates are not deduplicated") {
    CostLedger ledger;
    CostEvent e;
    e.llm_calls = 1;
    e.input_tokens = 100;
    e.output_tokens = 50;
    ledger.record(Phase::refinement, e);
    auto totals = ledger.totals(Phase::refinement);
    CHECK(totals.input_tokens == 100);
    CHECK(totals.output_tokens == 50);
    CHECK(totals.llm_calls == 1);

    ledger.record(Phase::refinement, e);  // caller owns idempotence
    totals = ledger.totals(Phase::refinement);
    CHECK(totals.input_tokens == 200);
    CHECK(totals.output_tokens == 100);

    CHECK(ledger.totals(Phase::verification).input_tokens == 0);
}

TEST_CASE("negative counts are rejected") {
    CostLedger ledger;
    CostEvent e;
    e.search_calls = -1;
    CHECK_THROWS_AS(ledger.record(Phase::refinement, e), std::invalid_argument);
}

TEST_CASE("replaying the audit log reproduces the ledger exactly") {
    CostLedger live;
    DetRng rng(8);
    for (int i = 0; i < 200; ++i) {
        CostEvent e;
        e.llm_calls = static_cast<double>(rng.uniform(3));
        e.input_tokens = static_cast<double>(rng.uniform(5000));
        e.output_tokens = static_cast<double>(rng.uniform(5000));
        e.search_calls = static_cast<double>(rng.uniform(2));
        e.scholar_calls = static_cast<double>(rng.uniform(2));
        e.browser_tokens = static_cast<double>(rng.uniform(10000));
        e.code_calls = static_cast<double>(rng.uniform(2));
        live.record(rng.uniform(2) ? Phase::refinement : Phase::verification, e);
    }

    CostLedger replayed = CostLedger::replay(live.events());
    for (Phase phase : {Phase::refinement, Phase::verification}) {
        auto a = live.totals(phase);
        auto b = replayed.totals(phase);
        CHECK(a.llm_calls == b.llm_calls);
        CHECK(a.input_tokens == b.input_tokens);
        CHECK(a.output_tokens == b.output_tokens);
        CHECK(a.search_calls == b.search_calls);
        CHECK(a.scholar_calls == b.scholar_calls);
        CHECK(a.browser_tokens == b.browser_tokens);
        CHECK(a.code_calls == b.code_calls);
    }

    // And through the serialized JSON form too.
    auto log_json = live.audit_log_json();
    std::vector<Json> lines(log_json.begin(), log_json.end());
    CostLedger from_json = CostLedger::from_audit_log_json(lines);
    CHECK(from_json.totals(Phase::refinement).input_tokens ==
          live.totals(Phase::refinement).input_tokens);
}

TEST_CASE("reference per-candidate averages price out to the expected figures") {
    // Refinement: 7.81 calls averaging 18,614 in / 11,643 out.
    CostLedger ledger;
    CostEvent refinement;
    refinement.llm_calls = 7.81;
    refinement.input_tokens = 7.81 * 18614;
    refinement.output_tokens = 7.81 * 11643;
    refinement.search_calls = 0.70;
    refinement.scholar_calls = 0.61;
    refinement.browser_tokens = 1.21 * 10000;
    refinement.code_calls = 0.94;
    ledger.record(Phase::refinement, refinement);

    // Verification: 3.32 calls averaging 20,182 in / 24,170 out.
    CostEvent verification;
    verification.llm_calls = 3.32;
    verification.input_tokens = 3.32 * 20182;
    verification.output_tokens = 3.32 * 24170;
    verification.search_calls = 0.50;
    verification.scholar_calls = 0.92;
    verification.browser_tokens = 1.30 * 10000;
    verification.code_calls = 0.53;
    ledger.record(Phase::verification, verification);

    CostReport report = total_cost(ledger, PriceTable::per_token_rates());
    CHECK(std::abs(report.refinement.llm_cost - 0.234) <= 0.001);
    CHECK(std::abs(report.verification.llm_cost - 0.172) <= 0.001);
    CHECK(report.refinement.search_cost + report.refinement.scholar_cost ==
          doctest::Approx(0.0036).epsilon(0.02));
    CHECK(report.verification.search_cost + report.verification.scholar_cost ==
          doctest::Approx(0.0039).epsilon(0.02));

    // Browser pricing: the per-token rate as written, and the per-1K preset
    // matching the quoted per-call figure.
    CHECK(report.refinement.browser_cost == doctest::Approx(1.21 * 10000 * 0.00005));
    CostReport kilo = total_cost(ledger, PriceTable::per_kilotoken_rates());
    CHECK(kilo.refinement.browser_cost == doctest::Approx(0.000605));

    // Code runs carry no dollar cost in either preset.
    CHECK(report.grand_total ==
          doctest::Approx(report.refinement.total + report.verification.total));
}

TEST_CASE("an all-zero ledger prices to zero dollars") {
    CostLedger ledger;
    CostReport report = total_cost(ledger, PriceTable::per_token_rates());
    CHECK(report.grand_total == 0.0);
    CHECK(report.refinement.total == 0.0);
    CHECK(report.verification.total == 0.0);
}

TEST_CASE("amortized cost: reference example, identity, and domain errors") {
    double amortized = amortized_cost(0.18, 0.33);
    CHECK(amortized == doctest::Approx(0.5454).epsilon(0.01));
    CHECK(amortized >= 0.54);
    CHECK(amortized <= 0.55);

    CHECK(amortized_cost(0.42, 1.0) == doctest::Approx(0.42));
    CHECK_THROWS_AS(amortized_cost(0.1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(amortized_cost(0.1, -0.2), std::invalid_argument);

    // End-to-end: refinement plus amortized verification.
    CHECK(0.24 + amortized_cost(0.18, 0.33) == doctest::Approx(0.78).epsilon(0.01));
}

TEST_CASE("cost is linear: pricing a merged ledger equals the sum of parts") {
    DetRng rng(15);
    CostLedger a, b;
    for (int i = 0; i < 50; ++i) {
        CostEvent e;
        e.input_tokens = static_cast<double>(rng.uniform(10000));
        e.output_tokens = static_cast<double>(rng.uniform(10000));
        e.search_calls = static_cast<double>(rng.uniform(3));
        e.browser_tokens = static_cast<double>(rng.uniform(20000));
        (i % 2 ? a : b).record(rng.uniform(2) ? Phase::refinement : Phase::verification, e);
    }
    PriceTable prices = PriceTable::per_token_rates();
    CostReport ra = total_cost(a, prices);
    CostReport rb = total_cost(b, prices);

    CostLedger merged = a;
    merged.merge_from(b);
    CostReport rm = total_cost(merged, prices);
    CHECK(rm.grand_total == doctest::Approx(ra.grand_total + rb.grand_total).epsilon(1e-12));
}

TEST_CASE("price table validation rejects negative rates") {
    PriceTable prices;
    prices.search_call_rate = -0.1;
    CHECK_THROWS_AS(prices.validate(), std::invalid_argument);
}

TEST_CASE("concurrent recording keeps totals consistent") {
    CostLedger ledger;
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t)
        pool.emplace_back([&ledger] {
            for (int i = 0; i < 500; ++i) {
                CostEvent e;
                e.input_tokens = 10;
                e.llm_calls = 1;
                ledger.record(Phase::refinement, e);
            }
        });
    for (auto& t : pool) t.join();
    CHECK(ledger.totals(Phase::refinement).input_tokens == 4 * 500 * 10);
    CHECK(ledger.events().size() == 4 * 500);
}
