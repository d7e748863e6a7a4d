#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskquant/elicitation.hpp"
#include "riskquant/estimate.hpp"
#include "riskquant/kri.hpp"

namespace riskquant {

/// A simulated-expert persona injected into the system prompt.
struct ExpertProfile {
    std::string name;
    std::string focus;
    std::string background;
    std::string specificity;
    std::string trait;
    std::string approach;
};

/// Five cybersecurity personas shipped as the default panel.
std::vector<ExpertProfile> default_profiles();
std::vector<ExpertProfile> parse_profiles(const std::string& text);
std::vector<ExpertProfile> load_profiles(const std::string& path);

/// Variables feeding the prompt templates. Every placeholder a template
/// uses must be set; rendering names the first missing one.
struct PromptContext {
    std::optional<std::string> scenario_name;
    std::optional<std::string> threat_actor_name;
    std::optional<std::string> threat_actor_description;
    std::optional<std::string> target_name;
    std::optional<std::string> target_description;
    std::optional<std::string> scenario_description;
    std::optional<std::string> step_name;
    std::optional<std::string> step_description;
    std::optional<std::string> step_assumptions;
    std::optional<std::string> benchmark_description;
    std::optional<std::string> task_name;
    std::optional<std::string> task_description;
    std::optional<std::string> task_metrics;
    std::optional<std::string> analysis_text;  // stage-1 output fed to stage 2
};

PromptContext parse_prompt_context(const std::string& text);
PromptContext load_prompt_context(const std::string& path);

enum class TemplateId { system, analysis, estimate };

/**
 * Render a template by byte-exact substitution of {placeholders}. The
 * profile object fills the system template's {expert_profile} slot. An
 * unresolved placeholder raises an error naming the variable.
 */
std::string render_prompt(TemplateId id, const PromptContext& ctx,
                          const ExpertProfile& profile);

/// Structured output of one estimation call.
struct ParsedEstimate {
    double final = 0.0;
    double minimum = 0.0;
    double maximum = 0.0;
    double confidence_in_range = 0.0;
    std::string rationale;
    /// Set when the reported confidence differs from the 90% interval the
    /// guidelines ask for; recorded verbatim either way.
    bool confidence_conflict = false;
};

/// Extract the labeled output block (Final/Minimum/Maximum/Confidence in
/// range/Rationale), case-insensitive, tolerant of surrounding prose.
ParsedEstimate parse_estimate_output(const std::string& text);

inline ThreePointEstimate to_three_point(const ParsedEstimate& e) {
    return {e.minimum, e.final, e.maximum, e.confidence_in_range,
            EstimateKind::probability};
}

struct EndpointConfig {
    std::string base_url;  // e.g. "http://127.0.0.1:8080/v1"
    std::string model;
    double temperature = 1.0;
    int transport_retries = 3;
    int parse_retries = 1;
    int backoff_base_ms = 500;  // exponential backoff between transport retries
    int rate_limit_per_min = 0;  // 0 = unlimited
    std::string api_key_env = "ESTIMATOR_API_KEY";
    std::string audit_log_path;  // JSON-lines transcript; empty = disabled
    int timeout_sec = 120;
};

EndpointConfig parse_endpoint_config(const std::string& text);
EndpointConfig load_endpoint_config(const std::string& path);

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProfileEstimate {
    std::string profile_name;
    bool ok = false;
    ParsedEstimate estimate;
    std::string analysis_text;
    std::string raw_response;
    std::string error;
    int parse_retries_used = 0;
};

struct PanelResult {
    double aggregate = 0.0;  // arithmetic mean over successful profiles
    std::vector<ProfileEstimate> per_profile;
    bool any_failed = false;
};

/**
 * Two-stage panel: per profile, a task-analysis call followed by an
 * estimation call with the analysis injected; the aggregate is the
 * arithmetic mean of the final probabilities. Temperature is sent as
 * configured (default 1.0); raw responses are kept and, when a transcript
 * path is configured, appended to the audit log.
 */
PanelResult run_panel_estimate(const PromptContext& ctx,
                               const std::vector<ExpertProfile>& profiles,
                               const EndpointConfig& endpoint);

/// Export a panel outcome as round-`round` EstimateRecords (kind=simulated).
std::vector<EstimateRecord> panel_to_records(const PanelResult& panel,
                                             const std::string& parameter_key,
                                             const std::string& capability_level,
                                             int round);

struct RankingSet {
    Ranking isolated;        // ascending isolated difficulty score
    Ranking easiest_first;   // repeated easiest-pick elimination
    Ranking hardest_first;   // repeated hardest-pick elimination (reversed)
    std::map<std::string, double> isolated_scores;
};

/**
 * Generate the three automatic difficulty rankings for a benchmark:
 * per-task isolated scoring, easiest-first elimination, and hardest-first
 * elimination. A duplicate or unknown pick is re-asked once, then falls
 * back to the lowest (resp. highest) isolated score among the remainder.
 */
RankingSet generate_rankings(const Benchmark& benchmark,
                             const EndpointConfig& endpoint);

struct PairDistance {
    double a = 0.0;
    double b = 0.0;
    double absolute = 0.0;
    double relative = 0.0;  // |a-b| / min(a,b); 0 for identical pairs
};

struct ConsistencyReport {
    std::vector<PairDistance> pairs;
    double mean_absolute = 0.0;
    double mean_relative = 0.0;
    bool pass_absolute = false;  // mean absolute <= absolute threshold
    bool pass_relative = false;  // mean relative <= relative threshold
    bool pass = false;           // either criterion
};

/// Internal-consistency check over paired uplift estimates of the same
/// capability measured via two benchmarks.
ConsistencyReport consistency_check(
    const std::vector<std::pair<double, double>>& paired,
    double absolute_threshold = 0.036, double relative_threshold = 0.0573);

}  // namespace riskquant
