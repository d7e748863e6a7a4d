#include "riskquant/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <set>
#include <sstream>

#include "riskquant/draw_rng.hpp"
#include "riskquant/stats.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace riskquant {

double gate_or(std::span<const double> parent_probs) {
    if (parent_probs.empty()) {
        throw std::invalid_argument("OR gate with no parents");
    }
    double fail_all = 1.0;
    for (double p : parent_probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("OR gate input outside [0, 1]");
        }
        fail_all *= 1.0 - p;
    }
    return 1.0 - fail_all;
}

double gate_and(std::span<const double> parent_probs) {
    if (parent_probs.empty()) {
        throw std::invalid_argument("AND gate with no parents");
    }
    double product = 1.0;
    for (double p : parent_probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("AND gate input outside [0, 1]");
        }
        product *= p;
    }
    return product;
}

double gate_choice(std::span<const double> parent_probs, ChoicePolicy policy,
                   std::span<const double> weights) {
    if (parent_probs.empty()) {
        throw std::invalid_argument("CHOICE gate with no parents");
    }
    for (double p : parent_probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("CHOICE gate input outside [0, 1]");
        }
    }
    if (policy == ChoicePolicy::max) {
        return *std::max_element(parent_probs.begin(), parent_probs.end());
    }
    if (weights.size() != parent_probs.size()) {
        throw std::invalid_argument("CHOICE gate weight/parent length mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        sum += weights[i] * parent_probs[i];
    }
    return sum;
}

double path_probability(std::span<const double> step_probs) {
    return gate_and(step_probs);
}

double scenario_success(std::span<const double> path_probs) {
    return gate_or(path_probs);
}

namespace {

struct PlanNode {
    GateKind gate = GateKind::LEAF;
    NodeRole role = NodeRole::probability_step;
    ChoicePolicy policy = ChoicePolicy::max;
    std::vector<std::size_t> parents;  // topo indices
    std::vector<double> weights;
    std::ptrdiff_t param = -1;  // index into param_keys for leaves
};

struct EvalPlan {
    std::vector<std::string> node_ids;  // topo order
    std::vector<PlanNode> nodes;
    std::vector<std::string> param_keys;  // sorted
    std::size_t actors = 0;
    std::size_t attempts = 0;
    std::size_t top = 0;
    std::vector<std::size_t> impacts;
    double horizon = 1.0;
};

EvalPlan build_plan(const RiskModel& model) {
    const ValidationReport report = validate(model);
    if (!report.ok) {
        throw std::invalid_argument("model failed validation:\n" + report.to_text());
    }

    EvalPlan plan;
    plan.horizon = model.horizon_years;
    plan.node_ids = topological_order(model);

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < plan.node_ids.size(); ++i) {
        index[plan.node_ids[i]] = i;
    }

    std::set<std::string> params;
    for (const Node& node : model.nodes) {
        if (node.parameter_key) params.insert(*node.parameter_key);
    }
    plan.param_keys.assign(params.begin(), params.end());
    std::map<std::string, std::size_t> param_index;
    for (std::size_t i = 0; i < plan.param_keys.size(); ++i) {
        param_index[plan.param_keys[i]] = i;
    }

    plan.nodes.resize(model.nodes.size());
    for (const Node& node : model.nodes) {
        PlanNode& pn = plan.nodes[index.at(node.id)];
        pn.gate = node.gate;
        pn.role = node.role;
        if (node.choice_policy) pn.policy = *node.choice_policy;
        if (node.choice_weights) pn.weights = *node.choice_weights;
        if (node.parameter_key) {
            pn.param = static_cast<std::ptrdiff_t>(param_index.at(*node.parameter_key));
        }
        switch (node.role) {
            case NodeRole::frequency_actors: plan.actors = index.at(node.id); break;
            case NodeRole::frequency_attempts: plan.attempts = index.at(node.id); break;
            case NodeRole::impact: plan.impacts.push_back(index.at(node.id)); break;
            case NodeRole::probability_step: break;
        }
    }
    for (const auto& [parent, child] : model.edges) {
        plan.nodes[index.at(child)].parents.push_back(index.at(parent));
    }
    // CHOICE weights are positional over parents; keep parent order stable
    // (sorted by id) so weight files mean the same thing everywhere.
    for (PlanNode& pn : plan.nodes) {
        std::sort(pn.parents.begin(), pn.parents.end(),
                  [&](std::size_t a, std::size_t b) {
                      return plan.node_ids[a] < plan.node_ids[b];
                  });
    }
    plan.top = index.at(model.top);
    return plan;
}

struct DrawCore {
    double success = 0.0;
    double rate = 0.0;
    double p_geq_one = 0.0;
    double harm = 0.0;
    double damage = 0.0;
    bool saturated = false;
};

DrawCore eval_plan(const EvalPlan& plan, std::span<const double> leaf_values,
                   IncidentCountModel count_model, std::span<double> node_out) {
    std::vector<double> parent_vals;
    for (std::size_t i = 0; i < plan.nodes.size(); ++i) {
        const PlanNode& node = plan.nodes[i];
        double value = 0.0;
        if (node.gate == GateKind::LEAF) {
            value = leaf_values[static_cast<std::size_t>(node.param)];
            if (!std::isfinite(value)) {
                throw std::invalid_argument("leaf '" + plan.node_ids[i] +
                                            "' has a non-finite value");
            }
            if (node.role == NodeRole::probability_step) {
                if (value < 0.0 || value > 1.0) {
                    throw std::invalid_argument("probability leaf '" + plan.node_ids[i] +
                                                "' outside [0, 1]");
                }
            } else if (value < 0.0) {
                throw std::invalid_argument("leaf '" + plan.node_ids[i] +
                                            "' must be nonnegative");
            }
        } else {
            parent_vals.clear();
            for (std::size_t p : node.parents) parent_vals.push_back(node_out[p]);
            switch (node.gate) {
                case GateKind::AND: value = gate_and(parent_vals); break;
                case GateKind::OR: value = gate_or(parent_vals); break;
                case GateKind::CHOICE:
                    value = gate_choice(parent_vals, node.policy, node.weights);
                    break;
                case GateKind::LEAF: break;
            }
        }
        node_out[i] = value;
    }

    DrawCore core;
    core.success = node_out[plan.top];
    core.rate = node_out[plan.actors] * node_out[plan.attempts] * core.success;
    core.harm = 1.0;
    for (std::size_t i : plan.impacts) core.harm *= node_out[i];
    const double expected_count = core.rate * plan.horizon;
    core.p_geq_one = count_model == IncidentCountModel::poisson
                         ? -std::expm1(-expected_count)
                         : std::min(1.0, expected_count);
    core.damage = expected_count * core.harm;
    if (core.damage > kDamageSaturation) {
        core.damage = kDamageSaturation;
        core.saturated = true;
    }
    return core;
}

void check_config(const SimulationConfig& config) {
    if (config.n_draws < 1) {
        throw std::invalid_argument("n_draws must be at least 1");
    }
    if (config.parallel_shards < 1) {
        throw std::invalid_argument("parallel_shards must be at least 1");
    }
}

SummaryStats stats_of(const std::vector<double>& values) {
    SummaryStats s;
    s.mean = stats::mean(values);
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    s.median = stats::quantile_sorted(sorted, 0.5);
    s.q05 = stats::quantile_sorted(sorted, 0.05);
    s.q95 = stats::quantile_sorted(sorted, 0.95);
    return s;
}

SimulationResult simulate_impl(
    const RiskModel& model, const ExpertMixture& mixture,
    const SimulationConfig& config,
    const std::vector<std::optional<double>>& overrides_by_param,
    const std::vector<std::string>* expert_subset, bool parallel) {
    check_config(config);
    const EvalPlan plan = build_plan(model);

    std::vector<std::string> expert_ids;
    if (expert_subset) {
        expert_ids = *expert_subset;
    } else {
        for (const ExpertId& e : mixture.experts) expert_ids.push_back(e.id);
    }
    std::sort(expert_ids.begin(), expert_ids.end());
    if (expert_ids.empty()) {
        throw std::invalid_argument("simulation needs at least one expert");
    }

    const std::size_t n_params = plan.param_keys.size();
    const std::size_t n_experts = expert_ids.size();
    // Resolve every (expert, parameter) distribution up front so coverage
    // gaps surface before any work is done.
    std::vector<const FittedDistribution*> dists(n_experts * n_params);
    for (std::size_t e = 0; e < n_experts; ++e) {
        for (std::size_t p = 0; p < n_params; ++p) {
            dists[e * n_params + p] = &mixture.resolve(expert_ids[e], plan.param_keys[p]);
        }
    }

    std::vector<std::optional<double>> overrides = overrides_by_param;
    overrides.resize(n_params);

    const std::size_t n = config.n_draws;
    const std::size_t n_nodes = plan.nodes.size();
    SimulationResult result;
    result.config = config;
    result.model_id = model.id;
    result.harm_unit = model.scenario.harm_unit;
    result.horizon_years = model.horizon_years;
    result.expert_ids = expert_ids;
    result.draws.expert_index.resize(n);
    result.draws.scenario_success_prob.resize(n);
    result.draws.annual_rate.resize(n);
    result.draws.p_geq_one.resize(n);
    result.draws.harm_per_incident.resize(n);
    result.draws.expected_annual_damage.resize(n);
    std::vector<double> node_matrix(n * n_nodes);
    std::vector<std::uint8_t> saturated(n, 0);

    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;

    auto do_draw = [&](std::size_t i) {
        DrawRng rng(config.seed, i);
        const std::size_t e = rng.next_below(n_experts);
        std::vector<double> leaf_values(n_params);
        for (std::size_t p = 0; p < n_params; ++p) {
            // Every parameter consumes one uniform whether or not it is
            // frozen, keeping draws paired across sensitivity reruns.
            const double u = rng.next_double();
            leaf_values[p] = overrides[p]
                                 ? *overrides[p]
                                 : detail::sample_from_uniform(
                                       *dists[e * n_params + p], u);
        }
        const DrawCore core =
            eval_plan(plan, leaf_values, config.incident_count_model,
                      std::span<double>(node_matrix.data() + i * n_nodes, n_nodes));
        result.draws.expert_index[i] = static_cast<std::uint32_t>(e);
        result.draws.scenario_success_prob[i] = core.success;
        result.draws.annual_rate[i] = core.rate;
        result.draws.p_geq_one[i] = core.p_geq_one;
        result.draws.harm_per_incident[i] = core.harm;
        result.draws.expected_annual_damage[i] = core.damage;
        saturated[i] = core.saturated ? 1 : 0;
    };

    auto guarded = [&](std::size_t i) {
        if (failed.load(std::memory_order_relaxed)) return;
        try {
            do_draw(i);
        } catch (const std::exception& e) {
            const std::lock_guard<std::mutex> lock(error_mutex);
            if (!failed.exchange(true)) error_message = e.what();
        }
    };

    if (parallel) {
        const int shards = static_cast<int>(config.parallel_shards);
#pragma omp parallel for schedule(static) num_threads(shards)
        for (std::size_t i = 0; i < n; ++i) {
            guarded(i);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            guarded(i);
        }
    }
    if (failed.load()) {
        throw std::runtime_error("simulation failed: " + error_message);
    }

    // All statistics are reduced serially in draw order so results do not
    // depend on the shard count.
    RiskSummary& summary = result.summary;
    summary.p_geq_one = stats_of(result.draws.p_geq_one);
    summary.expected_annual_damage = stats_of(result.draws.expected_annual_damage);
    for (std::size_t k = 0; k < n_nodes; ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum += node_matrix[i * n_nodes + k];
        }
        summary.per_node_mean[plan.node_ids[k]] = sum / static_cast<double>(n);
    }
    std::vector<ExpertSlice> slices(n_experts);
    for (std::size_t e = 0; e < n_experts; ++e) slices[e].expert_id = expert_ids[e];
    for (std::size_t i = 0; i < n; ++i) {
        ExpertSlice& slice = slices[result.draws.expert_index[i]];
        ++slice.draws;
        slice.mean_p_geq_one += result.draws.p_geq_one[i];
        slice.mean_expected_annual_damage += result.draws.expected_annual_damage[i];
    }
    for (ExpertSlice& slice : slices) {
        if (slice.draws > 0) {
            slice.mean_p_geq_one /= static_cast<double>(slice.draws);
            slice.mean_expected_annual_damage /= static_cast<double>(slice.draws);
        }
    }
    summary.per_expert = std::move(slices);
    summary.saturated_draws = 0;
    for (std::uint8_t s : saturated) summary.saturated_draws += s;
    return result;
}

}  // namespace

DrawOutcome evaluate_draw(const RiskModel& model,
                          const std::map<std::string, double>& leaf_values) {
    const EvalPlan plan = build_plan(model);
    std::vector<double> values(plan.param_keys.size());
    for (std::size_t p = 0; p < plan.param_keys.size(); ++p) {
        const auto it = leaf_values.find(plan.param_keys[p]);
        if (it == leaf_values.end()) {
            throw std::invalid_argument("missing leaf value for parameter '" +
                                        plan.param_keys[p] + "'");
        }
        values[p] = it->second;
    }
    std::vector<double> node_vals(plan.nodes.size());
    const DrawCore core =
        eval_plan(plan, values, IncidentCountModel::poisson, node_vals);

    DrawOutcome outcome;
    for (std::size_t i = 0; i < plan.nodes.size(); ++i) {
        outcome.node_values[plan.node_ids[i]] = node_vals[i];
    }
    outcome.scenario_success_prob = core.success;
    outcome.annual_rate = core.rate;
    outcome.p_geq_one = core.p_geq_one;
    outcome.harm_per_incident = core.harm;
    outcome.expected_annual_damage = core.damage;
    return outcome;
}

SimulationResult simulate(const RiskModel& model, const ExpertMixture& mixture,
                          const SimulationConfig& config) {
    return simulate_impl(model, mixture, config, {}, nullptr, true);
}

SimulationResult simulate_reference(const RiskModel& model,
                                    const ExpertMixture& mixture,
                                    const SimulationConfig& config) {
    return simulate_impl(model, mixture, config, {}, nullptr, false);
}

double mixture_median(const std::vector<FittedDistribution>& components) {
    if (components.empty()) {
        throw std::invalid_argument("mixture median of zero components");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const FittedDistribution& d : components) {
        if (std::holds_alternative<PointMass>(d)) {
            const double v = std::get<PointMass>(d).value;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        } else {
            lo = std::min(lo, quantile(d, 1e-12));
            hi = std::max(hi, quantile(d, 1.0 - 1e-12));
        }
    }
    if (!(hi > lo)) return lo;
    auto mixture_cdf = [&](double x) {
        double sum = 0.0;
        for (const FittedDistribution& d : components) sum += cdf(d, x);
        return sum / static_cast<double>(components.size());
    };
    for (int i = 0; i < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mixture_cdf(mid) < 0.5) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

SensitivityReport sensitivity(const RiskModel& model, const ExpertMixture& mixture,
                              const SimulationConfig& config) {
    const EvalPlan plan = build_plan(model);
    const SimulationResult base = simulate(model, mixture, config);

    SensitivityReport report;
    report.baseline = base.summary;

    std::vector<std::string> expert_ids;
    for (const ExpertId& e : mixture.experts) expert_ids.push_back(e.id);
    std::sort(expert_ids.begin(), expert_ids.end());

    for (std::size_t p = 0; p < plan.param_keys.size(); ++p) {
        std::vector<FittedDistribution> components;
        for (const std::string& eid : expert_ids) {
            components.push_back(mixture.resolve(eid, plan.param_keys[p]));
        }
        ParameterEffect effect;
        effect.parameter_key = plan.param_keys[p];
        effect.frozen_value = mixture_median(components);

        std::vector<std::optional<double>> overrides(plan.param_keys.size());
        overrides[p] = effect.frozen_value;
        const SimulationResult run =
            simulate_impl(model, mixture, config, overrides, nullptr, true);
        effect.delta_mean_damage = run.summary.expected_annual_damage.mean -
                                   base.summary.expected_annual_damage.mean;
        effect.delta_q95_damage = run.summary.expected_annual_damage.q95 -
                                  base.summary.expected_annual_damage.q95;
        effect.delta_mean_p_geq_one =
            run.summary.p_geq_one.mean - base.summary.p_geq_one.mean;
        effect.delta_q95_p_geq_one =
            run.summary.p_geq_one.q95 - base.summary.p_geq_one.q95;
        report.parameters.push_back(std::move(effect));
    }
    std::sort(report.parameters.begin(), report.parameters.end(),
              [](const ParameterEffect& a, const ParameterEffect& b) {
                  const double da = std::abs(a.delta_q95_damage);
                  const double db = std::abs(b.delta_q95_damage);
                  if (da != db) return da > db;
                  return a.parameter_key < b.parameter_key;
              });

    if (expert_ids.size() >= 2) {
        for (const std::string& left_out : expert_ids) {
            std::vector<std::string> subset;
            for (const std::string& eid : expert_ids) {
                if (eid != left_out) subset.push_back(eid);
            }
            const SimulationResult run =
                simulate_impl(model, mixture, config, {}, &subset, true);
            ExpertEffect effect;
            effect.expert_id = left_out;
            effect.delta_mean_damage = run.summary.expected_annual_damage.mean -
                                       base.summary.expected_annual_damage.mean;
            effect.delta_q95_damage = run.summary.expected_annual_damage.q95 -
                                      base.summary.expected_annual_damage.q95;
            effect.delta_mean_p_geq_one =
                run.summary.p_geq_one.mean - base.summary.p_geq_one.mean;
            effect.delta_q95_p_geq_one =
                run.summary.p_geq_one.q95 - base.summary.p_geq_one.q95;
            report.experts.push_back(std::move(effect));
        }
    }
    return report;
}

namespace {

nlohmann::json stats_to_json(const SummaryStats& s) {
    return {{"mean", s.mean}, {"median", s.median}, {"q05", s.q05}, {"q95", s.q95}};
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

nlohmann::json result_to_json(const SimulationResult& result,
                              const ExpertMixture& mixture) {
    nlohmann::json j;
    j["config"] = {
        {"n_draws", result.config.n_draws},
        {"seed", result.config.seed},
        {"incident_count_model",
         result.config.incident_count_model == IncidentCountModel::poisson
             ? "poisson"
             : "expected_value"},
        {"skip_threshold", result.config.skip_threshold}};
    j["model_id"] = result.model_id;
    j["harm_unit"] = result.harm_unit;
    j["horizon_years"] = result.horizon_years;
    j["experts"] = result.expert_ids;

    nlohmann::json summary;
    summary["p_geq_one"] = stats_to_json(result.summary.p_geq_one);
    summary["expected_annual_damage"] =
        stats_to_json(result.summary.expected_annual_damage);
    summary["per_node_mean"] = result.summary.per_node_mean;
    nlohmann::json slices = nlohmann::json::array();
    for (const ExpertSlice& s : result.summary.per_expert) {
        slices.push_back({{"expert", s.expert_id},
                          {"draws", s.draws},
                          {"mean_p_geq_one", s.mean_p_geq_one},
                          {"mean_expected_annual_damage",
                           s.mean_expected_annual_damage}});
    }
    summary["per_expert"] = std::move(slices);
    summary["saturated_draws"] = result.summary.saturated_draws;
    j["summary"] = std::move(summary);

    nlohmann::json fitted;
    for (const auto& [expert, params] : mixture.components) {
        nlohmann::json jp;
        for (const auto& [param, levels] : params) {
            nlohmann::json jl;
            for (const auto& [level, dist] : levels) {
                jl[level.empty() ? "baseline" : level] = dist_to_json(dist);
            }
            jp[param] = std::move(jl);
        }
        fitted[expert] = std::move(jp);
    }
    j["fitted_parameters"] = std::move(fitted);
    j["active_level"] =
        mixture.active_level.empty() ? "baseline" : mixture.active_level;
    return j;
}

std::string draws_to_csv(const SimulationResult& result) {
    std::ostringstream out;
    out << "draw_index,expert_id,scenario_success_prob,annual_rate,p_geq_one,"
           "harm_per_incident,expected_annual_damage\n";
    for (std::size_t i = 0; i < result.draws.expert_index.size(); ++i) {
        out << i << ',' << result.expert_ids[result.draws.expert_index[i]] << ','
            << format_double(result.draws.scenario_success_prob[i]) << ','
            << format_double(result.draws.annual_rate[i]) << ','
            << format_double(result.draws.p_geq_one[i]) << ','
            << format_double(result.draws.harm_per_incident[i]) << ','
            << format_double(result.draws.expected_annual_damage[i]) << '\n';
    }
    return out.str();
}

std::string sensitivity_to_csv(const SensitivityReport& report) {
    std::ostringstream out;
    out << "kind,name,frozen_value,delta_mean_damage,delta_q95_damage,"
           "delta_mean_p_geq_one,delta_q95_p_geq_one\n";
    for (const ParameterEffect& e : report.parameters) {
        out << "parameter," << e.parameter_key << ','
            << format_double(e.frozen_value) << ','
            << format_double(e.delta_mean_damage) << ','
            << format_double(e.delta_q95_damage) << ','
            << format_double(e.delta_mean_p_geq_one) << ','
            << format_double(e.delta_q95_p_geq_one) << '\n';
    }
    for (const ExpertEffect& e : report.experts) {
        out << "expert," << e.expert_id << ",,"
            << format_double(e.delta_mean_damage) << ','
            << format_double(e.delta_q95_damage) << ','
            << format_double(e.delta_mean_p_geq_one) << ','
            << format_double(e.delta_q95_p_geq_one) << '\n';
    }
    return out.str();
}

nlohmann::json sensitivity_to_json(const SensitivityReport& report) {
    nlohmann::json j;
    j["baseline"] = {
        {"p_geq_one", stats_to_json(report.baseline.p_geq_one)},
        {"expected_annual_damage",
         stats_to_json(report.baseline.expected_annual_damage)}};
    nlohmann::json params = nlohmann::json::array();
    for (const ParameterEffect& e : report.parameters) {
        params.push_back({{"parameter_key", e.parameter_key},
                          {"frozen_value", e.frozen_value},
                          {"delta_mean_damage", e.delta_mean_damage},
                          {"delta_q95_damage", e.delta_q95_damage},
                          {"delta_mean_p_geq_one", e.delta_mean_p_geq_one},
                          {"delta_q95_p_geq_one", e.delta_q95_p_geq_one}});
    }
    j["parameters"] = std::move(params);
    nlohmann::json experts = nlohmann::json::array();
    for (const ExpertEffect& e : report.experts) {
        experts.push_back({{"expert", e.expert_id},
                           {"delta_mean_damage", e.delta_mean_damage},
                           {"delta_q95_damage", e.delta_q95_damage},
                           {"delta_mean_p_geq_one", e.delta_mean_p_geq_one},
                           {"delta_q95_p_geq_one", e.delta_q95_p_geq_one}});
    }
    j["experts"] = std::move(experts);
    return j;
}

}  // namespace riskquant
