#include "riskquant/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"

using nlohmann::json;

namespace riskquant {

std::string to_string(NodeRole role) {
    switch (role) {
        case NodeRole::frequency_actors: return "frequency_actors";
        case NodeRole::frequency_attempts: return "frequency_attempts";
        case NodeRole::probability_step: return "probability_step";
        case NodeRole::impact: return "impact";
    }
    return "?";
}

std::string to_string(GateKind gate) {
    switch (gate) {
        case GateKind::LEAF: return "LEAF";
        case GateKind::AND: return "AND";
        case GateKind::OR: return "OR";
        case GateKind::CHOICE: return "CHOICE";
    }
    return "?";
}

std::string to_string(ChoicePolicy policy) {
    return policy == ChoicePolicy::max ? "max" : "weighted";
}

NodeRole node_role_from_string(const std::string& s) {
    if (s == "frequency_actors") return NodeRole::frequency_actors;
    if (s == "frequency_attempts") return NodeRole::frequency_attempts;
    if (s == "probability_step") return NodeRole::probability_step;
    if (s == "impact") return NodeRole::impact;
    throw ModelParseError("unknown role token '" + s + "'");
}

GateKind gate_kind_from_string(const std::string& s) {
    if (s == "LEAF") return GateKind::LEAF;
    if (s == "AND") return GateKind::AND;
    if (s == "OR") return GateKind::OR;
    if (s == "CHOICE") return GateKind::CHOICE;
    throw ModelParseError("unknown gate token '" + s + "'");
}

ChoicePolicy choice_policy_from_string(const std::string& s) {
    if (s == "max") return ChoicePolicy::max;
    if (s == "weighted") return ChoicePolicy::weighted;
    throw ModelParseError("unknown choice policy '" + s + "'");
}

std::size_t ValidationReport::error_count() const {
    return static_cast<std::size_t>(
        std::count_if(issues.begin(), issues.end(), [](const ValidationIssue& i) {
            return i.severity == IssueSeverity::error;
        }));
}

std::string ValidationReport::to_text() const {
    std::ostringstream out;
    if (ok) {
        out << "OK";
        if (!issues.empty()) out << " (" << issues.size() << " warning(s))";
        out << "\n";
    } else {
        out << "INVALID: " << error_count() << " error(s)\n";
    }
    for (const auto& issue : issues) {
        out << "  [" << (issue.severity == IssueSeverity::error ? "error" : "warning")
            << "] " << issue.where << ": " << issue.message << "\n";
    }
    return out.str();
}

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& context) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.contains(key)) {
            throw ModelParseError("unknown key '" + key + "' in " + context);
        }
    }
}

std::string require_string(const json& obj, const char* key,
                           const std::string& context) {
    if (!obj.contains(key)) {
        throw ModelParseError("missing key '" + std::string(key) + "' in " + context);
    }
    if (!obj.at(key).is_string()) {
        throw ModelParseError("key '" + std::string(key) + "' in " + context +
                              " must be a string");
    }
    return obj.at(key).get<std::string>();
}

Node parse_node(const json& jn) {
    if (!jn.is_object()) {
        throw ModelParseError("node entries must be objects");
    }
    reject_unknown_keys(jn,
                        {"id", "label", "role", "gate", "parameter_key",
                         "choice_policy", "choice_weights"},
                        "node");
    Node node;
    node.id = require_string(jn, "id", "node");
    const std::string context = "node '" + node.id + "'";
    node.label = jn.contains("label") ? require_string(jn, "label", context) : node.id;
    node.role = node_role_from_string(require_string(jn, "role", context));
    node.gate = gate_kind_from_string(require_string(jn, "gate", context));
    if (jn.contains("parameter_key")) {
        node.parameter_key = require_string(jn, "parameter_key", context);
    }
    if (jn.contains("choice_policy")) {
        node.choice_policy =
            choice_policy_from_string(require_string(jn, "choice_policy", context));
    }
    if (jn.contains("choice_weights")) {
        if (!jn.at("choice_weights").is_array()) {
            throw ModelParseError("choice_weights in " + context + " must be an array");
        }
        std::vector<double> weights;
        for (const auto& w : jn.at("choice_weights")) {
            if (!w.is_number()) {
                throw ModelParseError("choice_weights in " + context +
                                      " must be numeric");
            }
            weights.push_back(w.get<double>());
        }
        node.choice_weights = std::move(weights);
    }
    return node;
}

}  // namespace

RiskModel parse_model(const std::string& document) {
    json root;
    try {
        root = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ModelParseError(std::string("model syntax error: ") + e.what());
    }
    if (!root.is_object()) {
        throw ModelParseError("model document must be a JSON object");
    }
    reject_unknown_keys(root,
                        {"id", "description", "scenario", "horizon_years", "top",
                         "nodes", "edges"},
                        "model");

    RiskModel model;
    model.id = require_string(root, "id", "model");
    model.description =
        root.contains("description") ? require_string(root, "description", "model") : "";
    if (root.contains("scenario")) {
        const json& js = root.at("scenario");
        if (!js.is_object()) throw ModelParseError("scenario must be an object");
        reject_unknown_keys(js, {"actor", "target", "vector", "harm_unit"}, "scenario");
        model.scenario.actor =
            js.contains("actor") ? require_string(js, "actor", "scenario") : "";
        model.scenario.target =
            js.contains("target") ? require_string(js, "target", "scenario") : "";
        model.scenario.attack_vector =
            js.contains("vector") ? require_string(js, "vector", "scenario") : "";
        model.scenario.harm_unit =
            js.contains("harm_unit") ? require_string(js, "harm_unit", "scenario") : "USD";
    }
    if (root.contains("horizon_years")) {
        if (!root.at("horizon_years").is_number()) {
            throw ModelParseError("horizon_years must be numeric");
        }
        model.horizon_years = root.at("horizon_years").get<double>();
    }
    model.top = require_string(root, "top", "model");

    if (!root.contains("nodes") || !root.at("nodes").is_array()) {
        throw ModelParseError("model requires a 'nodes' array");
    }
    std::set<std::string> ids;
    for (const auto& jn : root.at("nodes")) {
        Node node = parse_node(jn);
        if (!ids.insert(node.id).second) {
            throw ModelParseError("duplicate node id '" + node.id + "'");
        }
        model.nodes.push_back(std::move(node));
    }

    if (root.contains("edges")) {
        if (!root.at("edges").is_array()) {
            throw ModelParseError("'edges' must be an array of [parent, child] pairs");
        }
        for (const auto& je : root.at("edges")) {
            if (!je.is_array() || je.size() != 2 || !je.at(0).is_string() ||
                !je.at(1).is_string()) {
                throw ModelParseError("each edge must be a [parent, child] string pair");
            }
            std::string parent = je.at(0).get<std::string>();
            std::string child = je.at(1).get<std::string>();
            for (const std::string& endpoint : {parent, child}) {
                if (!ids.contains(endpoint)) {
                    throw ModelParseError("edge references undeclared node '" +
                                          endpoint + "'");
                }
            }
            model.edges.emplace_back(std::move(parent), std::move(child));
        }
    }

    if (!ids.contains(model.top)) {
        throw ModelParseError("top event references undeclared node '" + model.top + "'");
    }
    return model;
}

std::string serialize_model(const RiskModel& model) {
    json root;
    root["id"] = model.id;
    root["description"] = model.description;
    root["scenario"] = {{"actor", model.scenario.actor},
                        {"target", model.scenario.target},
                        {"vector", model.scenario.attack_vector},
                        {"harm_unit", model.scenario.harm_unit}};
    root["horizon_years"] = model.horizon_years;
    root["top"] = model.top;
    json nodes = json::array();
    for (const Node& node : model.nodes) {
        json jn;
        jn["id"] = node.id;
        jn["label"] = node.label;
        jn["role"] = to_string(node.role);
        jn["gate"] = to_string(node.gate);
        if (node.parameter_key) jn["parameter_key"] = *node.parameter_key;
        if (node.choice_policy) jn["choice_policy"] = to_string(*node.choice_policy);
        if (node.choice_weights) jn["choice_weights"] = *node.choice_weights;
        nodes.push_back(std::move(jn));
    }
    root["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const auto& [parent, child] : model.edges) {
        edges.push_back(json::array({parent, child}));
    }
    root["edges"] = std::move(edges);
    return root.dump(2) + "\n";
}

RiskModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open model file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_model(buf.str());
}

namespace {

// Walks parent links from a node known to sit on a cycle and returns the
// cycle's ids in traversal order.
std::vector<std::string> trace_cycle(
    const std::map<std::string, std::vector<std::string>>& parents_of,
    const std::set<std::string>& in_cycle, std::string start) {
    std::vector<std::string> cycle;
    std::set<std::string> seen;
    std::string cur = start;
    while (!seen.contains(cur)) {
        seen.insert(cur);
        cycle.push_back(cur);
        const auto it = parents_of.find(cur);
        if (it == parents_of.end()) break;
        bool advanced = false;
        for (const std::string& p : it->second) {
            if (in_cycle.contains(p)) {
                cur = p;
                advanced = true;
                break;
            }
        }
        if (!advanced) break;
    }
    std::sort(cycle.begin(), cycle.end());
    return cycle;
}

}  // namespace

ValidationReport validate(const RiskModel& model) {
    ValidationReport report;
    auto error = [&](std::string where, std::string message) {
        report.issues.push_back(
            {IssueSeverity::error, std::move(where), std::move(message)});
    };
    auto warning = [&](std::string where, std::string message) {
        report.issues.push_back(
            {IssueSeverity::warning, std::move(where), std::move(message)});
    };

    std::map<std::string, const Node*> by_id;
    for (const Node& node : model.nodes) {
        if (!by_id.emplace(node.id, &node).second) {
            error(node.id, "duplicate node id");
        }
    }

    std::map<std::string, std::vector<std::string>> parents_of;
    std::map<std::string, std::vector<std::string>> children_of;
    std::set<std::pair<std::string, std::string>> seen_edges;
    for (const auto& [parent, child] : model.edges) {
        const std::string where = parent + "->" + child;
        bool ok_edge = true;
        for (const std::string& endpoint : {parent, child}) {
            if (!by_id.contains(endpoint)) {
                error(where, "edge endpoint '" + endpoint + "' does not exist");
                ok_edge = false;
            }
        }
        if (!ok_edge) continue;
        if (parent == child) {
            error(where, "self-loop edge");
            continue;
        }
        if (!seen_edges.emplace(parent, child).second) {
            error(where, "duplicate edge");
            continue;
        }
        parents_of[child].push_back(parent);
        children_of[parent].push_back(child);
    }

    // Cycle detection via Kahn elimination; whatever survives sits on or
    // downstream of a cycle.
    {
        std::map<std::string, std::size_t> indegree;
        for (const auto& [id, node] : by_id) {
            (void)node;
            indegree[id] = 0;
        }
        for (const auto& [child, parents] : parents_of) {
            indegree[child] = parents.size();
        }
        std::queue<std::string> ready;
        for (const auto& [id, deg] : indegree) {
            if (deg == 0) ready.push(id);
        }
        std::size_t removed = 0;
        while (!ready.empty()) {
            const std::string id = ready.front();
            ready.pop();
            ++removed;
            const auto it = children_of.find(id);
            if (it == children_of.end()) continue;
            for (const std::string& child : it->second) {
                if (--indegree[child] == 0) ready.push(child);
            }
        }
        if (removed != by_id.size()) {
            std::set<std::string> remaining;
            for (const auto& [id, deg] : indegree) {
                if (deg > 0) remaining.insert(id);
            }
            const auto cycle = trace_cycle(parents_of, remaining, *remaining.begin());
            std::string ids;
            for (const std::string& id : cycle) {
                if (!ids.empty()) ids += ", ";
                ids += id;
            }
            error(*remaining.begin(), "cycle detected involving nodes: " + ids);
        }
    }

    if (!by_id.contains(model.top)) {
        error(model.top.empty() ? "<top>" : model.top,
              "top event node does not exist");
    } else if (by_id.at(model.top)->role != NodeRole::probability_step) {
        error(model.top, "top event must be a probability_step node");
    }

    std::size_t actors_count = 0, attempts_count = 0, impact_count = 0;
    for (const Node& node : model.nodes) {
        const std::size_t n_parents =
            parents_of.contains(node.id) ? parents_of.at(node.id).size() : 0;
        const std::size_t n_children =
            children_of.contains(node.id) ? children_of.at(node.id).size() : 0;

        if (node.gate == GateKind::LEAF) {
            if (!node.parameter_key || node.parameter_key->empty()) {
                error(node.id, "LEAF node requires a parameter_key");
            }
            if (n_parents != 0) {
                error(node.id, "LEAF node must have no parents");
            }
        } else {
            if (node.parameter_key) {
                error(node.id, "gated node must not carry a parameter_key");
            }
            if (n_parents < 2) {
                error(node.id, "gated node requires at least 2 parents");
            }
            if (node.role != NodeRole::probability_step) {
                error(node.id, "gates apply only to probability_step nodes");
            }
        }

        const bool weighted = node.gate == GateKind::CHOICE && node.choice_policy &&
                              *node.choice_policy == ChoicePolicy::weighted;
        if (node.choice_policy && node.gate != GateKind::CHOICE) {
            error(node.id, "choice_policy is only valid on CHOICE gates");
        }
        if (node.choice_weights) {
            if (!weighted) {
                error(node.id,
                      "choice_weights require gate=CHOICE with policy=weighted");
            } else {
                double sum = 0.0;
                bool nonneg = true;
                for (double w : *node.choice_weights) {
                    sum += w;
                    nonneg = nonneg && w >= 0.0;
                }
                if (!nonneg) error(node.id, "choice weights must be nonnegative");
                if (std::abs(sum - 1.0) > 1e-9) {
                    error(node.id, "choice weights sum != 1");
                }
                if (node.choice_weights->size() != n_parents) {
                    error(node.id, "choice weights count must match parent count");
                }
            }
        } else if (weighted) {
            error(node.id, "policy=weighted requires choice_weights");
        }

        if (node.role != NodeRole::probability_step) {
            if (node.gate != GateKind::LEAF) {
                error(node.id, to_string(node.role) + " node must be a LEAF");
            }
            if (n_parents != 0) {
                error(node.id, to_string(node.role) + " node must be a root");
            }
            if (n_children != 0) {
                error(node.id,
                      to_string(node.role) + " node cannot feed a gate");
            }
        }

        switch (node.role) {
            case NodeRole::frequency_actors: ++actors_count; break;
            case NodeRole::frequency_attempts: ++attempts_count; break;
            case NodeRole::impact: ++impact_count; break;
            case NodeRole::probability_step:
                if (n_children == 0 && node.id != model.top) {
                    warning(node.id, "probability node does not reach the top event");
                }
                break;
        }
    }

    if (actors_count != 1) {
        error(model.id, "model requires exactly one frequency_actors node (found " +
                            std::to_string(actors_count) + ")");
    }
    if (attempts_count != 1) {
        error(model.id, "model requires exactly one frequency_attempts node (found " +
                            std::to_string(attempts_count) + ")");
    }
    if (impact_count == 0) {
        error(model.id, "model requires at least one impact node");
    }
    if (!(model.horizon_years > 0.0) || !std::isfinite(model.horizon_years)) {
        error(model.id, "horizon_years must be a positive real");
    }
    if (model.scenario.harm_unit.empty()) {
        error(model.id, "scenario harm_unit must be nonempty");
    }

    report.ok = report.error_count() == 0;
    return report;
}

std::vector<std::string> topological_order(const RiskModel& model) {
    std::map<std::string, std::size_t> indegree;
    std::map<std::string, std::vector<std::string>> children_of;
    for (const Node& node : model.nodes) {
        indegree[node.id] = 0;
    }
    for (const auto& [parent, child] : model.edges) {
        ++indegree.at(child);
        children_of[parent].push_back(child);
    }

    std::vector<std::string> order;
    order.reserve(model.nodes.size());

    // Roots first (std::map iteration is already id-sorted), then Kahn with
    // a lexicographic min-heap over newly ready nodes.
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [id, deg] : indegree) {
        if (deg == 0) order.push_back(id);
    }
    for (const std::string& root : order) {
        const auto it = children_of.find(root);
        if (it == children_of.end()) continue;
        for (const std::string& child : it->second) {
            if (--indegree.at(child) == 0) ready.push(child);
        }
    }
    while (!ready.empty()) {
        const std::string id = ready.top();
        ready.pop();
        order.push_back(id);
        const auto it = children_of.find(id);
        if (it == children_of.end()) continue;
        for (const std::string& child : it->second) {
            if (--indegree.at(child) == 0) ready.push(child);
        }
    }
    if (order.size() != model.nodes.size()) {
        throw std::runtime_error("topological_order: cycle detected");
    }
    return order;
}

}  // namespace riskquant
