#pragma once

#include "zpd/jsonl.hpp"

#include <mutex>
#include <string>
#include <vector>

namespace zpd {

enum class Phase { refinement, verification };

const char* phase_name(Phase p);
Phase phase_from_name(const std::string& name);

/// Counts are doubles so averaged per-candidate quantities can be priced
/// directly; live recording always passes integers.
struct CostEvent {
    double llm_calls = 0;
    double input_tokens = 0;
    double output_tokens = 0;
    double search_calls = 0;
    double scholar_calls = 0;
    double browser_tokens = 0;
    double code_calls = 0;  // executed locally, zero dollar cost
    bool estimated = false;  // token counts were estimated, not provider-reported
};

struct PhaseTotals {
    double llm_calls = 0;
    double input_tokens = 0;
    double output_tokens = 0;
    double search_calls = 0;
    double scholar_calls = 0;
    double browser_tokens = 0;
    double code_calls = 0;
};

struct PriceTable {
    double input_token_rate = 0.56e-6;
    double output_token_rate = 1.68e-6;
    double search_call_rate = 0.00275;
    double scholar_call_rate = 0.00275;
    double browser_token_rate = 0.00005;
    std::string preset = "browser-per-token";

    /// Default rates, browser priced per token.
    static PriceTable per_token_rates();
    /// Alternate preset pricing browser traffic per 1K tokens, matching the
    /// vendor-quoted browser figure; the run manifest records the choice.
    static PriceTable per_kilotoken_rates();

    void validate() const;  // all rates >= 0
};

struct CostBreakdown {
    double llm_cost = 0;
    double search_cost = 0;
    double scholar_cost = 0;
    double browser_cost = 0;
    double total = 0;
};

struct CostReport {
    CostBreakdown refinement;
    CostBreakdown verification;
    double grand_total = 0;
};

/// Monotone per-phase counters plus an append-only audit log. Recording is
/// thread-safe; totals and the log are read on a quiesced snapshot.
class CostLedger {
public:
    CostLedger() = default;
    CostLedger(const CostLedger& other);
    CostLedger& operator=(const CostLedger& other);

    /// Rejects negative counts. No deduplication: recording the same event
    /// twice doubles the counters (idempotence is the caller's concern).
    void record(Phase phase, const CostEvent& event);

    PhaseTotals totals(Phase phase) const;
    std::vector<std::pair<Phase, CostEvent>> events() const;

    /// Deterministic merge for per-worker sub-ledgers.
    void merge_from(const CostLedger& other);

    static CostLedger replay(const std::vector<std::pair<Phase, CostEvent>>& events);

    Json audit_log_json() const;
    static CostLedger from_audit_log_json(const std::vector<Json>& lines);

private:
    mutable std::mutex mutex_;
    PhaseTotals refinement_;
    PhaseTotals verification_;
    std::vector<std::pair<Phase, CostEvent>> log_;
};

CostBreakdown phase_cost(const PhaseTotals& totals, const PriceTable& prices);
CostReport total_cost(const CostLedger& ledger, const PriceTable& prices);

/// verified_cost / success_rate; success_rate must be in (0, 1].
double amortized_cost(double verified_cost, double success_rate);

Json cost_report_to_json(const CostReport& report);

}  // namespace zpd
