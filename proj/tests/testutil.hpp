#pragma once

// Shared fixtures and test-only oracles. The enumeration oracle here is the
// independent route the gate algebra is checked against; it never calls the
// engine's propagation.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "riskquant/model.hpp"

namespace testutil {

inline riskquant::Node leaf(const std::string& id, riskquant::NodeRole role,
                            const std::string& param) {
    riskquant::Node n;
    n.id = id;
    n.label = id;
    n.role = role;
    n.gate = riskquant::GateKind::LEAF;
    n.parameter_key = param;
    return n;
}

inline riskquant::Node prob_leaf(const std::string& id, const std::string& param) {
    return leaf(id, riskquant::NodeRole::probability_step, param);
}

inline riskquant::Node gate(const std::string& id, riskquant::GateKind kind) {
    riskquant::Node n;
    n.id = id;
    n.label = id;
    n.role = riskquant::NodeRole::probability_step;
    n.gate = kind;
    return n;
}

/// Frequency + impact scaffolding every runnable model needs.
inline void add_standard_roots(riskquant::RiskModel& model) {
    model.nodes.push_back(
        leaf("actors", riskquant::NodeRole::frequency_actors, "actor_count"));
    model.nodes.push_back(
        leaf("attempts", riskquant::NodeRole::frequency_attempts, "attempts_per_actor"));
    model.nodes.push_back(leaf("harm", riskquant::NodeRole::impact, "harm_usd"));
}

/// Two probability steps under an AND gate; the closed-form fixture.
inline riskquant::RiskModel chain_model() {
    riskquant::RiskModel m;
    m.id = "chain";
    m.scenario.harm_unit = "USD";
    add_standard_roots(m);
    m.nodes.push_back(prob_leaf("step_a", "p_step_a"));
    m.nodes.push_back(prob_leaf("step_b", "p_step_b"));
    m.nodes.push_back(gate("success", riskquant::GateKind::AND));
    m.edges = {{"step_a", "success"}, {"step_b", "success"}};
    m.top = "success";
    return m;
}

/// Single probability leaf as the top event.
inline riskquant::RiskModel single_leaf_model() {
    riskquant::RiskModel m;
    m.id = "single";
    m.scenario.harm_unit = "USD";
    add_standard_roots(m);
    m.nodes.push_back(prob_leaf("step", "p_step"));
    m.top = "step";
    return m;
}

// ---------------------------------------------------------------------------
// Random gate trees. Leaves are used once each, so every gate combines
// disjoint subtrees and exhaustive Bernoulli enumeration is exact.
// ---------------------------------------------------------------------------

struct GateTree {
    riskquant::RiskModel model;
    std::vector<std::string> leaf_params;  // probability leaf parameter keys
};

inline GateTree random_gate_tree(std::mt19937_64& gen, int max_leaves,
                                 bool choice_gates = true) {
    GateTree out;
    riskquant::RiskModel& m = out.model;
    m.id = "random_tree";
    m.scenario.harm_unit = "USD";
    add_standard_roots(m);

    const int n_leaves = 1 + static_cast<int>(gen() % max_leaves);
    std::vector<std::string> pool;
    for (int i = 0; i < n_leaves; ++i) {
        const std::string id = "leaf" + std::to_string(i);
        const std::string param = "p_leaf" + std::to_string(i);
        m.nodes.push_back(prob_leaf(id, param));
        out.leaf_params.push_back(param);
        pool.push_back(id);
    }
    int gate_count = 0;
    while (pool.size() > 1) {
        const std::size_t arity =
            2 + gen() % std::min<std::size_t>(2, pool.size() - 1);
        const std::string id = "gate" + std::to_string(gate_count++);
        const int pick = static_cast<int>(gen() % (choice_gates ? 3 : 2));
        riskquant::GateKind kind = pick == 0   ? riskquant::GateKind::AND
                                   : pick == 1 ? riskquant::GateKind::OR
                                               : riskquant::GateKind::CHOICE;
        m.nodes.push_back(gate(id, kind));
        for (std::size_t i = 0; i < arity && !pool.empty(); ++i) {
            const std::size_t j = gen() % pool.size();
            m.edges.emplace_back(pool[j], id);
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
        }
        pool.push_back(id);
    }
    m.top = pool.front();
    return out;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration oracle: every node's marginal probability under
// independent Bernoulli leaves, computed from 2^n outcome combinations.
// CHOICE wires through the parent with the highest marginal (first wins on
// ties, parents in id order, matching the engine's parent ordering).
// ---------------------------------------------------------------------------

inline double enumerate_top_probability(
    const riskquant::RiskModel& model,
    const std::map<std::string, double>& leaf_probs) {
    using riskquant::GateKind;
    const std::vector<std::string> order = riskquant::topological_order(model);

    std::map<std::string, const riskquant::Node*> by_id;
    for (const auto& node : model.nodes) by_id[node.id] = &node;
    std::map<std::string, std::vector<std::string>> parents_of;
    for (const auto& [p, c] : model.edges) parents_of[c].push_back(p);
    for (auto& [id, ps] : parents_of) {
        (void)id;
        std::sort(ps.begin(), ps.end());
    }

    std::vector<std::string> leaves;
    for (const auto& id : order) {
        const auto* node = by_id.at(id);
        if (node->gate == GateKind::LEAF &&
            node->role == riskquant::NodeRole::probability_step) {
            leaves.push_back(id);
        }
    }
    const std::size_t k = leaves.size();
    const std::size_t combos = std::size_t{1} << k;

    // outcome[id][x] for every assignment x; marginal[id] accumulated as
    // nodes complete in topological order.
    std::map<std::string, std::vector<char>> outcome;
    std::map<std::string, double> marginal;

    std::vector<double> assign_prob(combos, 1.0);
    for (std::size_t x = 0; x < combos; ++x) {
        for (std::size_t i = 0; i < k; ++i) {
            const double p = leaf_probs.at(*by_id.at(leaves[i])->parameter_key);
            assign_prob[x] *= (x >> i & 1) ? p : 1.0 - p;
        }
    }

    for (const auto& id : order) {
        const auto* node = by_id.at(id);
        if (node->role != riskquant::NodeRole::probability_step) continue;
        std::vector<char>& out = outcome[id];
        out.resize(combos);
        if (node->gate == GateKind::LEAF) {
            const std::size_t bit =
                std::find(leaves.begin(), leaves.end(), id) - leaves.begin();
            for (std::size_t x = 0; x < combos; ++x) out[x] = (x >> bit) & 1;
        } else {
            const auto& parents = parents_of.at(id);
            if (node->gate == GateKind::CHOICE) {
                std::string chosen = parents.front();
                for (const auto& p : parents) {
                    if (marginal.at(p) > marginal.at(chosen)) chosen = p;
                }
                out = outcome.at(chosen);
            } else {
                for (std::size_t x = 0; x < combos; ++x) {
                    bool value = node->gate == GateKind::AND;
                    for (const auto& p : parents) {
                        if (node->gate == GateKind::AND) {
                            value = value && outcome.at(p)[x];
                        } else {
                            value = value || outcome.at(p)[x];
                        }
                    }
                    out[x] = value;
                }
            }
        }
        double prob = 0.0;
        for (std::size_t x = 0; x < combos; ++x) {
            if (out[x]) prob += assign_prob[x];
        }
        marginal[id] = prob;
    }
    return marginal.at(model.top);
}

}  // namespace testutil
