#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "riskquant/elicitation.hpp"
#include "riskquant/estimate.hpp"
#include "riskquant/model.hpp"

namespace riskquant {

struct Task {
    std::string id;
    std::string description;
    std::set<std::string> tags;                 // skills / vectors covered
    std::optional<double> native_difficulty;    // e.g. first-solve time
    std::optional<double> isolated_score;       // 0-100 in-isolation difficulty
    bool operator==(const Task&) const = default;
};

struct Benchmark {
    std::string id;
    std::string description;
    std::vector<Task> tasks;  // >= 2, unique ids
    bool operator==(const Benchmark&) const = default;

    const Task& task(const std::string& task_id) const;
};

/// A strict difficulty order over a benchmark's tasks, easiest first.
struct Ranking {
    std::string source;
    std::vector<std::string> ordered_task_ids;
    bool operator==(const Ranking&) const = default;
};

/// Anchor list linking capability levels (benchmark tasks) to per-expert
/// parameter estimates; interpolated to cover intermediate levels.
struct CapabilityMapping {
    std::string parameter_key;
    std::string benchmark_id;
    struct Anchor {
        std::string task_id;
        std::map<std::string, ThreePointEstimate> estimates;  // expert id -> estimate
    };
    std::vector<Anchor> anchors;  // ordered easiest -> hardest
};

/// Capability level determined from pass rates: the hardest qualifying
/// task, or below_floor when the easiest task already fails.
struct CapabilityLevel {
    bool below_floor = false;
    std::string task_id;  // meaningful when !below_floor

    static CapabilityLevel floor() { return {true, ""}; }
    static CapabilityLevel at(std::string task) { return {false, std::move(task)}; }
};

Benchmark parse_benchmark(const std::string& text);
Benchmark load_benchmark(const std::string& path);
/// Ranking files are JSON maps task id -> 1-based rank (1 = easiest).
Ranking parse_ranking(const std::string& text, const std::string& source);
Ranking load_ranking(const std::string& path);
std::string ranking_to_json(const Ranking& ranking);
std::map<std::string, double> load_pass_rates(const std::string& path);
CapabilityMapping parse_mapping(const std::string& text);
CapabilityMapping load_mapping(const std::string& path);

/**
 * Borda aggregation of difficulty rankings (all easiest-first over the same
 * task set). A task in 1-based position p of an n-task ranking scores
 * n - p; tasks are ordered by descending total. Ties break by
 * isolated_score (higher = harder, so lower scores come first), then by id.
 */
Ranking borda_aggregate(const std::vector<Ranking>& rankings,
                        const Benchmark& benchmark);

/// Kendall's coefficient of concordance, no-ties formula:
/// W = 12*S / (m^2 * (n^3 - n)). Needs >= 2 rankings over >= 2 tasks.
double kendalls_w(const std::vector<Ranking>& rankings);

/**
 * Difficulty-stratified subsample: initial picks at 1-based positions
 * round((i+0.5)*n/target) along the ranked list, then greedy neighbor-swap
 * passes that grow the subsample's tag union.
 *
 * Pass order (deterministic): picks are visited easiest-first; each pick
 * tries unpicked neighbors by increasing distance 1..r, lower position
 * before higher, and takes the first swap that strictly grows the tag
 * union over the whole subsample. The radius r starts at 1 and increments
 * after each improving pass (max 3); passes stop once one makes no swap.
 * The result is returned in ranking order.
 */
std::vector<std::string> subsample(const Benchmark& benchmark,
                                   const Ranking& final_ranking,
                                   std::size_t target_size);

enum class CapabilityRule {
    prefix,   // hardest task whose entire easier prefix passes at >= 0.9
    anywhere  // hardest task anywhere with pass rate >= 0.9
};

CapabilityLevel capability_from_scores(
    const Ranking& final_ranking, const std::map<std::string, double>& pass_rates,
    CapabilityRule rule = CapabilityRule::prefix);

enum class InterpolationAxis {
    rank_index,  // task order in the final ranking
    log_fst      // log of native_difficulty (first-solve time)
};

/**
 * Piecewise-linear interpolation of an expert's anchor estimates at the
 * given level, componentwise over (low, mode, high, confidence). Levels
 * outside the anchor span clamp to the nearest anchor. The log_fst axis
 * needs the benchmark for native difficulties.
 */
ThreePointEstimate interpolate_mapping(
    const CapabilityMapping& mapping, const Ranking& final_ranking,
    const std::string& expert_id, const std::string& level_task_id,
    InterpolationAxis axis = InterpolationAxis::rank_index,
    const Benchmark* benchmark = nullptr);

struct UpliftResult {
    ExpertMixture mixture;
    CapabilityLevel level;
    std::vector<std::string> applied;  // parameters replaced at the level
    std::vector<std::pair<std::string, std::string>> skipped;  // (parameter, reason)
};

/**
 * Condition a baseline mixture on a capability level. Mapped parameters
 * whose baseline mode (median across experts) stays at or below the skip
 * threshold are refitted from interpolated anchor estimates; everything
 * else keeps its baseline distribution. At most one mapping per parameter.
 */
UpliftResult apply_uplift(const RiskModel& model, const ExpertMixture& baseline,
                          const std::vector<CapabilityMapping>& mappings,
                          const std::map<std::string, Ranking>& rankings_by_benchmark,
                          const CapabilityLevel& level, double skip_threshold = 0.85,
                          InterpolationAxis axis = InterpolationAxis::rank_index,
                          const Benchmark* benchmark = nullptr);

}  // namespace riskquant
