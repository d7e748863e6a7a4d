#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "riskquant/elicitation.hpp"
#include "riskquant/model.hpp"

#include "json.hpp"

namespace riskquant {

enum class IncidentCountModel { poisson, expected_value };

struct SimulationConfig {
    std::size_t n_draws = 100000;
    std::uint64_t seed = 0;
    IncidentCountModel incident_count_model = IncidentCountModel::poisson;
    double skip_threshold = 0.85;
    /// Parallelism degree for the OpenMP kernel. Results are bit-identical
    /// for any shard count; this only controls execution.
    std::size_t parallel_shards = 1;
};

/// One deterministic evaluation of the DAG under fixed leaf values.
struct DrawOutcome {
    std::string expert_id;
    std::map<std::string, double> node_values;
    double scenario_success_prob = 0.0;
    double annual_rate = 0.0;        // actors * attempts * success
    double p_geq_one = 0.0;          // 1 - exp(-rate * horizon) under poisson
    double harm_per_incident = 0.0;  // product of impact node values
    double expected_annual_damage = 0.0;
};

struct SummaryStats {
    double mean = 0.0;
    double median = 0.0;
    double q05 = 0.0;
    double q95 = 0.0;
};

struct ExpertSlice {
    std::string expert_id;
    std::size_t draws = 0;
    double mean_p_geq_one = 0.0;
    double mean_expected_annual_damage = 0.0;
};

struct RiskSummary {
    SummaryStats p_geq_one;
    SummaryStats expected_annual_damage;
    std::map<std::string, double> per_node_mean;
    std::vector<ExpertSlice> per_expert;
    std::size_t saturated_draws = 0;  // damage clamped at the saturation cap
};

/// Per-draw outcomes in columnar form, indexed by draw.
struct DrawTable {
    std::vector<std::uint32_t> expert_index;
    std::vector<double> scenario_success_prob;
    std::vector<double> annual_rate;
    std::vector<double> p_geq_one;
    std::vector<double> harm_per_incident;
    std::vector<double> expected_annual_damage;
};

struct SimulationResult {
    SimulationConfig config;
    std::string model_id;
    std::string harm_unit;
    double horizon_years = 1.0;
    std::vector<std::string> expert_ids;
    DrawTable draws;
    RiskSummary summary;
};

/// Damage values above this cap are clamped and counted as saturated.
constexpr double kDamageSaturation = 1e15;

// Gate algebra (all probabilities in [0, 1], lists nonempty).
double gate_or(std::span<const double> parent_probs);
double gate_and(std::span<const double> parent_probs);
double gate_choice(std::span<const double> parent_probs, ChoicePolicy policy,
                   std::span<const double> weights = {});

/// Success probability of a single path of conjunctive steps.
double path_probability(std::span<const double> step_probs);
/// Probability that at least one of several independent paths succeeds.
double scenario_success(std::span<const double> path_probs);

/**
 * Evaluate the DAG once under fixed leaf values (parameter_key -> value).
 * Gated nodes are computed in topological order; shared nodes are computed
 * once and reused. Probability leaves must lie in [0, 1]; frequency and
 * impact leaves must be nonnegative.
 */
DrawOutcome evaluate_draw(const RiskModel& model,
                          const std::map<std::string, double>& leaf_values);

/**
 * Monte Carlo over epistemic parameters: each draw picks one expert
 * uniformly, samples every leaf from that expert's distributions, and
 * evaluates the DAG deterministically. Bit-identical for a given seed
 * across runs and shard counts. This is the OpenMP kernel.
 */
SimulationResult simulate(const RiskModel& model, const ExpertMixture& mixture,
                          const SimulationConfig& config);

/// Serial reference implementation; must agree with simulate() bit for bit.
SimulationResult simulate_reference(const RiskModel& model,
                                    const ExpertMixture& mixture,
                                    const SimulationConfig& config);

struct ParameterEffect {
    std::string parameter_key;
    double frozen_value = 0.0;  // mixture median the parameter was pinned to
    double delta_mean_damage = 0.0;
    double delta_q95_damage = 0.0;
    double delta_mean_p_geq_one = 0.0;
    double delta_q95_p_geq_one = 0.0;
};

struct ExpertEffect {
    std::string expert_id;
    double delta_mean_damage = 0.0;
    double delta_q95_damage = 0.0;
    double delta_mean_p_geq_one = 0.0;
    double delta_q95_p_geq_one = 0.0;
};

struct SensitivityReport {
    RiskSummary baseline;
    /// Parameters ranked by |delta of the damage 95th percentile|, largest
    /// first. Each rerun froze that parameter at its mixture-median value
    /// with the same seed (paired draws).
    std::vector<ParameterEffect> parameters;
    /// Leave-one-expert-out deltas, in expert id order.
    std::vector<ExpertEffect> experts;
};

SensitivityReport sensitivity(const RiskModel& model, const ExpertMixture& mixture,
                              const SimulationConfig& config);

/// Median of the uniform expert mixture for one parameter (the value
/// sensitivity freezes a parameter at).
double mixture_median(const std::vector<FittedDistribution>& components);

nlohmann::json result_to_json(const SimulationResult& result,
                              const ExpertMixture& mixture);
std::string draws_to_csv(const SimulationResult& result);
std::string sensitivity_to_csv(const SensitivityReport& report);
nlohmann::json sensitivity_to_json(const SensitivityReport& report);

}  // namespace riskquant
