#include "zpd/cost_ledger.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

namespace zpd {

const char* phase_name(Phase p) {
    return p == Phase::refinement ? "refinement" : "verification";
}

Phase phase_from_name(const std::string& name) {
    if (name == "refinement") return Phase::refinement;
    if (name == "verification") return Phase::verification;
    throw std::invalid_argument("unknown phase: " + name);
}

PriceTable PriceTable::per_token_rates() { return PriceTable{}; }

PriceTable PriceTable::per_kilotoken_rates() {
    PriceTable t;
    t.browser_token_rate = 0.00005 / 1000.0;
    t.preset = "browser-per-kilotoken";
    return t;
}

void PriceTable::validate() const {
    if (input_token_rate < 0 || output_token_rate < 0 || search_call_rate < 0 ||
        scholar_call_rate < 0 || browser_token_rate < 0)
        throw std::invalid_argument("price rates must be >= 0");
}

CostLedger::CostLedger(const CostLedger& other) {
    std::lock_guard<std::mutex> lock(other.mutex_);
    refinement_ = other.refinement_;
    verification_ = other.verification_;
    log_ = other.log_;
}

CostLedger& CostLedger::operator=(const CostLedger& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    refinement_ = other.refinement_;
    verification_ = other.verification_;
    log_ = other.log_;
    return *this;
}

void CostLedger::record(Phase phase, const CostEvent& e) {
    if (e.llm_calls < 0 || e.input_tokens < 0 || e.output_tokens < 0 || e.search_calls < 0 ||
        e.scholar_calls < 0 || e.browser_tokens < 0 || e.code_calls < 0)
        throw std::invalid_argument("cost event counts must be non-negative");
    std::lock_guard<std::mutex> lock(mutex_);
    PhaseTotals& t = (phase == Phase::refinement) ? refinement_ : verification_;
    t.llm_calls += e.llm_calls;
    t.input_tokens += e.input_tokens;
    t.output_tokens += e.output_tokens;
    t.search_calls += e.search_calls;
    t.scholar_calls += e.scholar_calls;
    t.browser_tokens += e.browser_tokens;
    t.code_calls += e.code_calls;
    log_.emplace_back(phase, e);
}

PhaseTotals CostLedger::totals(Phase phase) const {
    std::lock_guard<std::mutex> lock(mutex_);
    return phase == Phase::refinement ? refinement_ : verification_;
}

std::vector<std::pair<Phase, CostEvent>> CostLedger::events() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_;
}

void CostLedger::merge_from(const CostLedger& other) {
    for (const auto& [phase, event] : other.events()) record(phase, event);
}

CostLedger CostLedger::replay(const std::vector<std::pair<Phase, CostEvent>>& events) {
    CostLedger ledger;
    for (const auto& [phase, event] : events) ledger.record(phase, event);
    return ledger;
}

namespace {

Json event_to_json(Phase phase, const CostEvent& e) {
    return Json{{"phase", phase_name(phase)},
                {"llm_calls", e.llm_calls},
                {"input_tokens", e.input_tokens},
                {"output_tokens", e.output_tokens},
                {"search_calls", e.search_calls},
                {"scholar_calls", e.scholar_calls},
                {"browser_tokens", e.browser_tokens},
                {"code_calls", e.code_calls},
                {"estimated", e.estimated}};
}

}  // namespace

Json CostLedger::audit_log_json() const {
    Json lines = Json::array();
    for (const auto& [phase, event] : events()) lines.push_back(event_to_json(phase, event));
    return lines;
}

CostLedger CostLedger::from_audit_log_json(const std::vector<Json>& lines) {
    CostLedger ledger;
    for (const auto& j : lines) {
        CostEvent e;
        e.llm_calls = j.value("llm_calls", 0.0);
        e.input_tokens = j.value("input_tokens", 0.0);
        e.output_tokens = j.value("output_tokens", 0.0);
        e.search_calls = j.value("search_calls", 0.0);
        e.scholar_calls = j.value("scholar_calls", 0.0);
        e.browser_tokens = j.value("browser_tokens", 0.0);
        e.code_calls = j.value("code_calls", 0.0);
        e.estimated = j.value("estimated", false);
        ledger.record(phase_from_name(j.at("phase").get<std::string>()), e);
    }
    return ledger;
}

CostBreakdown phase_cost(const PhaseTotals& t, const PriceTable& prices) {
    prices.validate();
    CostBreakdown b;
    b.llm_cost = t.input_tokens * prices.input_token_rate + t.output_tokens * prices.output_token_rate;
    b.search_cost = t.search_calls * prices.search_call_rate;
    b.scholar_cost = t.scholar_calls * prices.scholar_call_rate;
    b.browser_cost = t.browser_tokens * prices.browser_token_rate;
    b.total = b.llm_cost + b.search_cost + b.scholar_cost + b.browser_cost;  // code runs free
    return b;
}

CostReport total_cost(const CostLedger& ledger, const PriceTable& prices) {
    CostReport r;
    r.refinement = phase_cost(ledger.totals(Phase::refinement), prices);
    r.verification = phase_cost(ledger.totals(Phase::verification), prices);
    r.grand_total = r.refinement.total + r.verification.total;
    return r;
}

double amortized_cost(double verified_cost, double success_rate) {
    if (success_rate <= 0.0 || success_rate > 1.0)
        throw std::invalid_argument("success_rate must be in (0, 1]");
    return verified_cost / success_rate;
}

Json cost_report_to_json(const CostReport& report) {
    auto breakdown = [](const CostBreakdown& b) {
        return Json{{"llm_cost", b.llm_cost},
                    {"search_cost", b.search_cost},
                    {"scholar_cost", b.scholar_cost},
                    {"browser_cost", b.browser_cost},
                    {"total", b.total}};
    };
    return Json{{"refinement", breakdown(report.refinement)},
                {"verification", breakdown(report.verification)},
                {"grand_total", report.grand_total}};
}

}  // namespace zpd
