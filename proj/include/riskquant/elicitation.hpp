#pragma once

#include <map>
#include <string>
#include <vector>

#include "riskquant/distfit.hpp"
#include "riskquant/estimate.hpp"

namespace riskquant {

enum class ExpertKind { human, simulated };

struct ExpertId {
    std::string id;
    std::string display_name;
    ExpertKind kind = ExpertKind::human;
    bool operator==(const ExpertId&) const = default;
};

/// One elicited estimate. capability_level is empty for baseline records.
struct EstimateRecord {
    ExpertId expert;
    std::string parameter_key;
    std::string capability_level;  // "" = baseline
    int round = 1;                 // 1 or 2
    ThreePointEstimate estimate;
    std::string rationale;
};

/// Load records from the JSON array format. Duplicate
/// (expert, parameter_key, capability_level, round) tuples are an error.
std::vector<EstimateRecord> parse_records(const std::string& text);
/// Same data as CSV (header row required, identical column names).
std::vector<EstimateRecord> parse_records_csv(const std::string& text);
std::vector<EstimateRecord> load_records(const std::string& path);
std::string records_to_json(const std::vector<EstimateRecord>& records);

/// Round-1 summary for one (parameter, level): the discussion document.
struct ParameterSummary {
    std::string parameter_key;
    std::string capability_level;
    double median_mode = 0.0;  // even expert count: mean of the middle two
    double min_low = 0.0;
    double max_high = 0.0;
    std::vector<EstimateRecord> rows;  // per-expert values, verbatim
};

std::vector<ParameterSummary> summarize_round(
    const std::vector<EstimateRecord>& records, int round);

inline std::vector<ParameterSummary> round1_summary(
    const std::vector<EstimateRecord>& records) {
    return summarize_round(records, 1);
}

/// Disagreement score for one parameter: IQR of modes over median of modes.
struct DisagreementEntry {
    std::string parameter_key;
    std::string capability_level;
    double score = 0.0;
    double iqr = 0.0;
    double median_mode = 0.0;
    bool zero_median = false;  // score fell back to the absolute IQR
};

/// Parameters ordered most-disagreement-first; ties broken by absolute IQR
/// then by key. Requires >= 2 experts per parameter.
std::vector<DisagreementEntry> disagreement_ranking(
    const std::vector<EstimateRecord>& records);

/**
 * ExpertMixture — per-expert fitted distributions, sampled one expert at a
 * time with uniform weights. components[expert][parameter][level] holds the
 * fit; level "" is the baseline. active_level selects which entry the
 * engine samples (falling back to baseline for parameters without an entry
 * at that level).
 */
struct ExpertMixture {
    std::vector<ExpertId> experts;  // sorted by id
    std::map<std::string, std::map<std::string, std::map<std::string, FittedDistribution>>>
        components;
    std::string active_level;  // "" = baseline
    bool operator==(const ExpertMixture&) const = default;

    /// Distribution the engine samples for (expert, parameter) under
    /// active_level. Throws on coverage gaps.
    const FittedDistribution& resolve(const std::string& expert_id,
                                      const std::string& parameter_key) const;
};

/**
 * Fit round-2 records into a mixture (probability -> Beta, quantity ->
 * PERT). Every expert must cover every (parameter, level) pair present in
 * the record set; gaps are reported per expert. No pooling across experts.
 */
ExpertMixture build_mixture(const std::vector<EstimateRecord>& records);

/// Fits-file form of a mixture (fitted parameters, no raw estimates).
nlohmann::json mixture_to_json(const ExpertMixture& mixture);
ExpertMixture mixture_from_json(const nlohmann::json& j);

}  // namespace riskquant
