#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "riskquant/model.hpp"
#include "testutil.hpp"

using namespace riskquant;

namespace {

const char* kMinimalModel = R"({
  "id": "minimal",
  "description": "smallest legal model",
  "scenario": {"actor": "opportunist", "target": "small business",
               "vector": "phishing", "harm_unit": "USD"},
  "top": "step",
  "nodes": [
    {"id": "actors", "role": "frequency_actors", "gate": "LEAF",
     "parameter_key": "actor_count"},
    {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF",
     "parameter_key": "attempts_per_actor"},
    {"id": "step", "role": "probability_step", "gate": "LEAF",
     "parameter_key": "p_step"},
    {"id": "harm", "role": "impact", "gate": "LEAF", "parameter_key": "harm_usd"}
  ],
  "edges": []
})";

// Hand-written corpus for the round-trip oracle.
std::vector<std::string> corpus() {
    std::vector<std::string> docs;
    docs.push_back(kMinimalModel);
    docs.push_back(R"({
      "id": "and_chain", "top": "success",
      "nodes": [
        {"id": "actors", "role": "frequency_actors", "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "a", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_a"},
        {"id": "b", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_b"},
        {"id": "success", "role": "probability_step", "gate": "AND"},
        {"id": "harm", "role": "impact", "gate": "LEAF", "parameter_key": "harm"}
      ],
      "edges": [["a", "success"], ["b", "success"]]
    })");
    docs.push_back(R"({
      "id": "or_pair", "description": "two routes in", "top": "entry",
      "nodes": [
        {"id": "actors", "role": "frequency_actors", "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "phish", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_phish"},
        {"id": "exploit", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_exploit"},
        {"id": "entry", "role": "probability_step", "gate": "OR"},
        {"id": "harm", "role": "impact", "gate": "LEAF", "parameter_key": "harm"}
      ],
      "edges": [["phish", "entry"], ["exploit", "entry"]]
    })");
    docs.push_back(R"({
      "id": "choice_max", "top": "exfil",
      "nodes": [
        {"id": "actors", "role": "frequency_actors", "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "tunnel", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_tunnel"},
        {"id": "usb", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_usb"},
        {"id": "exfil", "role": "probability_step", "gate": "CHOICE", "choice_policy": "max"},
        {"id": "harm", "role": "impact", "gate": "LEAF", "parameter_key": "harm"}
      ],
      "edges": [["tunnel", "exfil"], ["usb", "exfil"]]
    })");
    docs.push_back(R"({
      "id": "choice_weighted", "top": "route",
      "nodes": [
        {"id": "actors", "role": "frequency_actors", "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "fast", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_fast"},
        {"id": "slow", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_slow"},
        {"id": "route", "role": "probability_step", "gate": "CHOICE",
         "choice_policy": "weighted", "choice_weights": [0.3, 0.7]},
        {"id": "harm", "role": "impact", "gate": "LEAF", "parameter_key": "harm"}
      ],
      "edges": [["fast", "route"], ["slow", "route"]]
    })");
    docs.push_back(R"({
      "id": "diamond", "top": "goal",
      "nodes": [
        {"id": "actors", "role": "frequency_actors", "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "shared", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_shared"},
        {"id": "y", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_y"},
        {"id": "z", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_z"},
        {"id": "left", "role": "probability_step", "gate": "OR"},
        {"id": "right", "role": "probability_step", "gate": "OR"},
        {"id": "goal", "role": "probability_step", "gate": "AND"},
        {"id": "harm", "role": "impact", "gate": "LEAF", "parameter_key": "harm"}
      ],
      "edges": [["shared", "left"], ["y", "left"], ["shared", "right"],
                ["z", "right"], ["left", "goal"], ["right", "goal"]]
    })");
    docs.push_back(R"({
      "id": "multi_impact", "top": "success", "horizon_years": 1.0,
      "scenario": {"actor": "crime group", "target": "smb", "vector": "ransomware",
                   "harm_unit": "USD"},
      "nodes": [
        {"id": "actors", "role": "frequency_actors", "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "s1", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_s1"},
        {"id": "s2", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_s2"},
        {"id": "success", "role": "probability_step", "gate": "AND"},
        {"id": "ransom_size", "role": "impact", "gate": "LEAF", "parameter_key": "ransom_usd"},
        {"id": "payment_share", "role": "impact", "gate": "LEAF", "parameter_key": "p_payment"}
      ],
      "edges": [["s1", "success"], ["s2", "success"]]
    })");
    docs.push_back(R"({
      "id": "long_horizon", "top": "step", "horizon_years": 2.5,
      "scenario": {"actor": "insider", "target": "registry", "vector": "abuse",
                   "harm_unit": "records"},
      "nodes": [
        {"id": "actors", "role": "frequency_actors", "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "step", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_step"},
        {"id": "harm", "role": "impact", "gate": "LEAF", "parameter_key": "harm"}
      ],
      "edges": []
    })");
    docs.push_back(R"({
      "id": "deep_mix", "top": "top",
      "nodes": [
        {"id": "actors", "role": "frequency_actors", "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "l1", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_l1"},
        {"id": "l2", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_l2"},
        {"id": "l3", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_l3"},
        {"id": "l4", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_l4"},
        {"id": "m1", "role": "probability_step", "gate": "OR"},
        {"id": "m2", "role": "probability_step", "gate": "AND"},
        {"id": "top", "role": "probability_step", "gate": "AND"},
        {"id": "harm", "role": "impact", "gate": "LEAF", "parameter_key": "harm"}
      ],
      "edges": [["l1", "m1"], ["l2", "m1"], ["l3", "m2"], ["l4", "m2"],
                ["m1", "top"], ["m2", "top"]]
    })");
    docs.push_back(R"({
      "id": "labels", "description": "labels differ from ids", "top": "gate",
      "nodes": [
        {"id": "actors", "label": "Actor population", "role": "frequency_actors",
         "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "label": "Attempts per actor-year",
         "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "recon", "label": "Reconnaissance succeeds",
         "role": "probability_step", "gate": "LEAF", "parameter_key": "p_recon"},
        {"id": "deliver", "label": "Delivery succeeds", "role": "probability_step",
         "gate": "LEAF", "parameter_key": "p_deliver"},
        {"id": "gate", "label": "Both stages succeed", "role": "probability_step",
         "gate": "AND"},
        {"id": "harm", "label": "Loss per incident", "role": "impact",
         "gate": "LEAF", "parameter_key": "harm"}
      ],
      "edges": [["recon", "gate"], ["deliver", "gate"]]
    })");
    docs.push_back(R"({
      "id": "wide_or", "top": "any",
      "nodes": [
        {"id": "actors", "role": "frequency_actors", "gate": "LEAF", "parameter_key": "n_actors"},
        {"id": "attempts", "role": "frequency_attempts", "gate": "LEAF", "parameter_key": "n_attempts"},
        {"id": "v1", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_v1"},
        {"id": "v2", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_v2"},
        {"id": "v3", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_v3"},
        {"id": "v4", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_v4"},
        {"id": "v5", "role": "probability_step", "gate": "LEAF", "parameter_key": "p_v5"},
        {"id": "any", "role": "probability_step", "gate": "OR"},
        {"id": "harm", "role": "impact", "gate": "LEAF", "parameter_key": "harm"}
      ],
      "edges": [["v1", "any"], ["v2", "any"], ["v3", "any"], ["v4", "any"],
                ["v5", "any"]]
    })");
    return docs;
}

}  // namespace

TEST_CASE("minimal model parses and validates") {
    const RiskModel model = parse_model(kMinimalModel);
    CHECK(model.nodes.size() == 4);
    CHECK(model.top == "step");
    CHECK(model.horizon_years == 1.0);
    CHECK(model.scenario.harm_unit == "USD");
    const ValidationReport report = validate(model);
    CHECK(report.ok);
}

TEST_CASE("edge to an undeclared node names it") {
    std::string doc = kMinimalModel;
    doc.replace(doc.find("\"edges\": []"), 11, R"("edges": [["step", "x9"]])");
    CHECK_THROWS_WITH_AS(parse_model(doc),
                         "edge references undeclared node 'x9'", ModelParseError);
}

TEST_CASE("unknown keys, roles and gates are rejected") {
    std::string doc = kMinimalModel;
    doc.replace(doc.find("\"id\": \"minimal\""), 15, "\"id\": \"m\", \"extra\": 1");
    CHECK_THROWS_AS(parse_model(doc), ModelParseError);

    std::string bad_role = kMinimalModel;
    bad_role.replace(bad_role.find("probability_step"), 16, "likelihood");
    CHECK_THROWS_WITH_AS(parse_model(bad_role), "unknown role token 'likelihood'",
                         ModelParseError);

    std::string bad_gate = kMinimalModel;
    bad_gate.replace(bad_gate.find("\"LEAF\""), 6, "\"XOR\"");
    CHECK_THROWS_WITH_AS(parse_model(bad_gate), "unknown gate token 'XOR'",
                         ModelParseError);
}

TEST_CASE("duplicate node ids are a parse error") {
    std::string doc = kMinimalModel;
    doc.replace(doc.find("\"id\": \"harm\""), 12, "\"id\": \"step\"");
    CHECK_THROWS_WITH_AS(parse_model(doc), "duplicate node id 'step'",
                         ModelParseError);
}

TEST_CASE("syntax errors are reported with position info") {
    try {
        parse_model("{\"id\": }");
        FAIL("expected a parse error");
    } catch (const ModelParseError& e) {
        CHECK(std::string(e.what()).find("syntax error") != std::string::npos);
    }
}

TEST_CASE("round-trip over the hand-written corpus") {
    for (const std::string& doc : corpus()) {
        const RiskModel once = parse_model(doc);
        const RiskModel twice = parse_model(serialize_model(once));
        CHECK(once == twice);
        CHECK(validate(once).ok);
    }
}

TEST_CASE("validate reports cycles with the node ids involved") {
    RiskModel model = testutil::chain_model();
    model.edges.emplace_back("success", "step_a");  // success -> step_a -> success
    const ValidationReport report = validate(model);
    CHECK_FALSE(report.ok);
    bool found = false;
    for (const auto& issue : report.issues) {
        if (issue.message.find("cycle") != std::string::npos) {
            found = true;
            CHECK(issue.message.find("step_a") != std::string::npos);
            CHECK(issue.message.find("success") != std::string::npos);
        }
    }
    CHECK(found);
}

TEST_CASE("validate rejects bad choice weights") {
    RiskModel model = testutil::chain_model();
    Node& success = model.nodes.back();
    success.gate = GateKind::CHOICE;
    success.choice_policy = ChoicePolicy::weighted;
    success.choice_weights = std::vector<double>{0.6, 0.6};
    const ValidationReport report = validate(model);
    CHECK_FALSE(report.ok);
    bool found = false;
    for (const auto& issue : report.issues) {
        if (issue.message.find("sum != 1") != std::string::npos) found = true;
    }
    CHECK(found);
}

TEST_CASE("validate enforces structural invariants") {
    SUBCASE("LEAF with parents") {
        RiskModel m = testutil::chain_model();
        m.edges.emplace_back("step_a", "step_b");
        CHECK_FALSE(validate(m).ok);
    }
    SUBCASE("gated node with one parent") {
        RiskModel m = testutil::chain_model();
        m.edges.pop_back();
        CHECK_FALSE(validate(m).ok);
    }
    SUBCASE("gated node carrying a parameter key") {
        RiskModel m = testutil::chain_model();
        m.nodes.back().parameter_key = "oops";
        CHECK_FALSE(validate(m).ok);
    }
    SUBCASE("impact node feeding a gate") {
        RiskModel m = testutil::chain_model();
        m.edges.emplace_back("harm", "success");
        CHECK_FALSE(validate(m).ok);
    }
    SUBCASE("missing top") {
        RiskModel m = testutil::chain_model();
        m.top = "nope";
        CHECK_FALSE(validate(m).ok);
    }
    SUBCASE("top must be a probability node") {
        RiskModel m = testutil::chain_model();
        m.top = "harm";
        CHECK_FALSE(validate(m).ok);
    }
    SUBCASE("two actors nodes") {
        RiskModel m = testutil::chain_model();
        m.nodes.push_back(
            testutil::leaf("actors2", NodeRole::frequency_actors, "n2"));
        CHECK_FALSE(validate(m).ok);
    }
    SUBCASE("no impact node") {
        RiskModel m = testutil::chain_model();
        m.nodes.erase(m.nodes.begin() + 2);
        CHECK_FALSE(validate(m).ok);
    }
    SUBCASE("nonpositive horizon") {
        RiskModel m = testutil::chain_model();
        m.horizon_years = 0.0;
        CHECK_FALSE(validate(m).ok);
    }
    SUBCASE("empty harm unit") {
        RiskModel m = testutil::chain_model();
        m.scenario.harm_unit = "";
        CHECK_FALSE(validate(m).ok);
    }
}

TEST_CASE("validate is pure") {
    RiskModel model = testutil::chain_model();
    model.edges.emplace_back("success", "step_a");
    const ValidationReport a = validate(model);
    const ValidationReport b = validate(model);
    REQUIRE(a.issues.size() == b.issues.size());
    CHECK(a.ok == b.ok);
    for (std::size_t i = 0; i < a.issues.size(); ++i) {
        CHECK(a.issues[i].message == b.issues[i].message);
        CHECK(a.issues[i].where == b.issues[i].where);
    }
}

TEST_CASE("topological order on chains and diamonds") {
    RiskModel chain;
    chain.id = "c";
    chain.nodes = {testutil::prob_leaf("A", "pa"), testutil::gate("B", GateKind::AND),
                   testutil::gate("C", GateKind::AND)};
    chain.edges = {{"A", "B"}, {"A", "C"}, {"B", "C"}};
    // Not a valid risk model, but topological_order only needs the graph.
    const auto order = topological_order(chain);
    CHECK(order == std::vector<std::string>{"A", "B", "C"});

    RiskModel diamond;
    diamond.nodes = {testutil::prob_leaf("A", "pa"), testutil::gate("B", GateKind::AND),
                     testutil::gate("C", GateKind::AND),
                     testutil::gate("D", GateKind::AND)};
    diamond.edges = {{"A", "B"}, {"A", "C"}, {"B", "D"}, {"C", "D"}};
    CHECK(topological_order(diamond) == std::vector<std::string>{"A", "B", "C", "D"});
}

TEST_CASE("topological order on random DAGs verified by edge direction") {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 20; ++trial) {
        RiskModel m;
        m.id = "rand";
        const int n = 50;
        for (int i = 0; i < n; ++i) {
            m.nodes.push_back(
                testutil::gate("n" + std::to_string(i), GateKind::AND));
        }
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (gen() % 100 < 8) {
                    m.edges.emplace_back("n" + std::to_string(i),
                                         "n" + std::to_string(j));
                }
            }
        }
        const auto order = topological_order(m);
        REQUIRE(order.size() == static_cast<std::size_t>(n));
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
        for (const auto& [parent, child] : m.edges) {
            CHECK(pos.at(parent) < pos.at(child));  // every edge points forward
        }
    }
}

TEST_CASE("topological order places all roots first") {
    RiskModel m = testutil::chain_model();
    const auto order = topological_order(m);
    // chain_model has five roots (actors, attempts, harm, step_a, step_b) and
    // one gated node.
    const std::set<std::string> roots = {"actors", "attempts", "harm", "step_a",
                                         "step_b"};
    for (std::size_t i = 0; i < roots.size(); ++i) {
        CHECK(roots.contains(order[i]));
    }
    CHECK(order.back() == "success");
}

TEST_CASE("topological order throws on cycles") {
    RiskModel m = testutil::chain_model();
    m.edges.emplace_back("success", "step_a");
    CHECK_THROWS_AS((void)topological_order(m), std::runtime_error);
}

TEST_CASE("every validated model orders with all roots first") {
    std::mt19937_64 gen(29);
    for (int trial = 0; trial < 30; ++trial) {
        const testutil::GateTree tree = testutil::random_gate_tree(gen, 8);
        REQUIRE(validate(tree.model).ok);
        const auto order = topological_order(tree.model);
        REQUIRE(order.size() == tree.model.nodes.size());

        std::set<std::string> with_parents;
        for (const auto& [parent, child] : tree.model.edges) {
            (void)parent;
            with_parents.insert(child);
        }
        const std::size_t n_roots = tree.model.nodes.size() - with_parents.size();
        for (std::size_t i = 0; i < order.size(); ++i) {
            const bool is_root = !with_parents.contains(order[i]);
            CHECK(is_root == (i < n_roots));
        }
    }
}
