#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace riskquant {

enum class NodeRole { frequency_actors, frequency_attempts, probability_step, impact };
enum class GateKind { LEAF, AND, OR, CHOICE };
enum class ChoicePolicy { max, weighted };

std::string to_string(NodeRole role);
std::string to_string(GateKind gate);
std::string to_string(ChoicePolicy policy);
NodeRole node_role_from_string(const std::string& s);
GateKind gate_kind_from_string(const std::string& s);
ChoicePolicy choice_policy_from_string(const std::string& s);

/// Descriptive scenario metadata; carried through to reports, never
/// interpreted by the engine.
struct ScenarioMeta {
    std::string actor;
    std::string target;
    std::string attack_vector;
    std::string harm_unit = "USD";
    bool operator==(const ScenarioMeta&) const = default;
};

struct Node {
    std::string id;
    std::string label;
    NodeRole role = NodeRole::probability_step;
    GateKind gate = GateKind::LEAF;
    std::optional<std::string> parameter_key;       // LEAF only
    std::optional<ChoicePolicy> choice_policy;      // CHOICE only; absent = max
    std::optional<std::vector<double>> choice_weights;  // CHOICE weighted only
    bool operator==(const Node&) const = default;
};

/**
 * RiskModel — a DAG of parameterized event nodes joined by gates; the unit
 * of simulation. Frequency and impact nodes are roots; gates combine
 * probability steps; `top` names the scenario-success node.
 */
struct RiskModel {
    std::string id;
    std::string description;
    ScenarioMeta scenario;
    double horizon_years = 1.0;
    std::string top;
    std::vector<Node> nodes;
    std::vector<std::pair<std::string, std::string>> edges;  // (parent, child)
    bool operator==(const RiskModel&) const = default;
};

enum class IssueSeverity { error, warning };

struct ValidationIssue {
    IssueSeverity severity = IssueSeverity::error;
    std::string where;  // node id or "parent->child" edge
    std::string message;
};

struct ValidationReport {
    bool ok = true;
    std::vector<ValidationIssue> issues;

    std::size_t error_count() const;
    std::string to_text() const;
};

struct ModelParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/**
 * Parse a model document (JSON, UTF-8). Unknown keys, duplicate node ids,
 * unknown role/gate tokens, and edges to undeclared nodes are all errors;
 * syntax errors report the byte position.
 */
RiskModel parse_model(const std::string& document);

/// Canonical JSON rendering; parse(serialize(m)) == m for every valid model.
std::string serialize_model(const RiskModel& model);

RiskModel load_model(const std::string& path);

/// Pure structural validation: reports every violated invariant.
/// ok is true iff no error-severity issue was found.
ValidationReport validate(const RiskModel& model);

/**
 * Deterministic topological order: all roots first (sorted by id), then
 * remaining nodes with lexicographic tie-break. Every parent precedes its
 * children. Throws if the edge graph has a cycle.
 */
std::vector<std::string> topological_order(const RiskModel& model);

}  // namespace riskquant
