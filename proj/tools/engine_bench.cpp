// Benchmark: serial reference vs OpenMP simulation kernel on a synthetic
// model, verifying bit-equality of the results while timing both.

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "riskquant/elicitation.hpp"
#include "riskquant/engine.hpp"
#include "riskquant/model.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace riskquant;

namespace {

Node leaf(const std::string& id, NodeRole role, const std::string& param) {
    Node n;
    n.id = id;
    n.label = id;
    n.role = role;
    n.gate = GateKind::LEAF;
    n.parameter_key = param;
    return n;
}

// A wide two-layer model: 12 probability leaves under three OR gates joined
// by a top AND.
RiskModel bench_model() {
    RiskModel m;
    m.id = "bench";
    m.scenario.harm_unit = "USD";
    m.nodes.push_back(leaf("actors", NodeRole::frequency_actors, "n_actors"));
    m.nodes.push_back(leaf("attempts", NodeRole::frequency_attempts, "n_attempts"));
    m.nodes.push_back(leaf("harm", NodeRole::impact, "harm_usd"));
    for (int g = 0; g < 3; ++g) {
        Node or_gate;
        or_gate.id = "or" + std::to_string(g);
        or_gate.label = or_gate.id;
        or_gate.gate = GateKind::OR;
        m.nodes.push_back(or_gate);
        for (int i = 0; i < 4; ++i) {
            const std::string id = "s" + std::to_string(g) + "_" + std::to_string(i);
            m.nodes.push_back(leaf(id, NodeRole::probability_step, "p_" + id));
            m.edges.emplace_back(id, or_gate.id);
        }
        m.edges.emplace_back(or_gate.id, "top");
    }
    Node top;
    top.id = "top";
    top.label = "top";
    top.gate = GateKind::AND;
    m.nodes.push_back(top);
    m.top = "top";
    return m;
}

ExpertMixture bench_mixture(const RiskModel& model) {
    ExpertMixture mixture;
    int i = 0;
    for (const std::string eid : {"e1", "e2", "e3"}) {
        mixture.experts.push_back({eid, eid, ExpertKind::human});
        for (const Node& node : model.nodes) {
            if (!node.parameter_key) continue;
            FittedDistribution dist;
            if (node.role == NodeRole::probability_step) {
                dist = BetaParams{2.0 + 0.2 * i, 3.0 + 0.1 * i};
            } else if (node.role == NodeRole::impact) {
                dist = PertParams{1e4, 8e4 + 1e4 * i, 1e6};
            } else {
                dist = PertParams{1.0, 10.0 + i, 40.0};
            }
            mixture.components[eid][*node.parameter_key][""] = dist;
        }
        ++i;
    }
    return mixture;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t draws = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 200000;
    const RiskModel model = bench_model();
    const ExpertMixture mixture = bench_mixture(model);

    SimulationConfig config;
    config.n_draws = draws;
    config.seed = 42;

    std::printf("model: %zu nodes, %zu draws\n", model.nodes.size(), draws);

    auto t0 = std::chrono::steady_clock::now();
    const SimulationResult serial = simulate_reference(model, mixture, config);
    const double serial_s = seconds_since(t0);
    std::printf("serial reference: %8.3f s  (%.0f draws/s)\n", serial_s,
                draws / serial_s);

    int max_threads = 1;
#ifdef _OPENMP
    max_threads = omp_get_max_threads();
#endif
    for (int shards = 1; shards <= max_threads * 2; shards *= 2) {
        config.parallel_shards = static_cast<std::size_t>(shards);
        t0 = std::chrono::steady_clock::now();
        const SimulationResult parallel = simulate(model, mixture, config);
        const double par_s = seconds_since(t0);

        const bool identical =
            parallel.draws.expected_annual_damage ==
                serial.draws.expected_annual_damage &&
            parallel.draws.p_geq_one == serial.draws.p_geq_one &&
            parallel.summary.expected_annual_damage.q95 ==
                serial.summary.expected_annual_damage.q95;
        std::printf("openmp %2d shard(s): %8.3f s  (%.0f draws/s)  speedup %.2fx  %s\n",
                    shards, par_s, draws / par_s, serial_s / par_s,
                    identical ? "bit-identical" : "MISMATCH");
        if (!identical) return 1;
    }
    std::printf("p>=1 mean %.6f   damage q95 %.1f %s\n",
                serial.summary.p_geq_one.mean,
                serial.summary.expected_annual_damage.q95,
                serial.harm_unit.c_str());
    return 0;
}
