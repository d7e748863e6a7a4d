#include "riskquant/kri.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "riskquant/stats.hpp"

#include "json.hpp"

using nlohmann::json;

namespace riskquant {

const Task& Benchmark::task(const std::string& task_id) const {
    for (const Task& t : tasks) {
        if (t.id == task_id) return t;
    }
    throw std::invalid_argument("benchmark '" + id + "' has no task '" + task_id + "'");
}

namespace {

std::string slurp(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(std::string("cannot open ") + what + " file '" +
                                 path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string(what) + " syntax error: " + e.what());
    }
}

void check_same_task_set(const std::vector<Ranking>& rankings) {
    if (rankings.empty()) {
        throw std::invalid_argument("no rankings given");
    }
    std::set<std::string> base(rankings[0].ordered_task_ids.begin(),
                               rankings[0].ordered_task_ids.end());
    if (base.size() != rankings[0].ordered_task_ids.size()) {
        throw std::invalid_argument("ranking '" + rankings[0].source +
                                    "' repeats a task");
    }
    for (const Ranking& r : rankings) {
        std::set<std::string> ids(r.ordered_task_ids.begin(), r.ordered_task_ids.end());
        if (ids != base || ids.size() != r.ordered_task_ids.size()) {
            throw std::invalid_argument("ranking '" + r.source +
                                        "' covers a different task set");
        }
    }
}

}  // namespace

Benchmark parse_benchmark(const std::string& text) {
    const json root = parse_json(text, "benchmark file");
    Benchmark b;
    b.id = root.at("id").get<std::string>();
    b.description =
        root.contains("description") ? root.at("description").get<std::string>() : "";
    std::set<std::string> ids;
    for (const auto& jt : root.at("tasks")) {
        Task t;
        t.id = jt.at("id").get<std::string>();
        if (!ids.insert(t.id).second) {
            throw std::invalid_argument("duplicate task id '" + t.id + "'");
        }
        t.description =
            jt.contains("description") ? jt.at("description").get<std::string>() : "";
        if (jt.contains("tags")) {
            for (const auto& tag : jt.at("tags")) {
                t.tags.insert(tag.get<std::string>());
            }
        }
        if (jt.contains("native_difficulty") && !jt.at("native_difficulty").is_null()) {
            t.native_difficulty = jt.at("native_difficulty").get<double>();
            if (*t.native_difficulty < 0.0) {
                throw std::invalid_argument("task '" + t.id +
                                            "' has negative native_difficulty");
            }
        }
        if (jt.contains("isolated_score") && !jt.at("isolated_score").is_null()) {
            t.isolated_score = jt.at("isolated_score").get<double>();
        }
        b.tasks.push_back(std::move(t));
    }
    if (b.tasks.size() < 2) {
        throw std::invalid_argument("benchmark '" + b.id + "' needs at least 2 tasks");
    }
    return b;
}

Benchmark load_benchmark(const std::string& path) {
    return parse_benchmark(slurp(path, "benchmark"));
}

Ranking parse_ranking(const std::string& text, const std::string& source) {
    const json root = parse_json(text, "ranking file");
    if (!root.is_object()) {
        throw std::invalid_argument("ranking file must be a JSON map task id -> rank");
    }
    std::vector<std::pair<int, std::string>> by_rank;
    for (const auto& [task_id, rank] : root.items()) {
        if (!rank.is_number_integer()) {
            throw std::invalid_argument("rank of task '" + task_id +
                                        "' must be an integer");
        }
        by_rank.emplace_back(rank.get<int>(), task_id);
    }
    std::sort(by_rank.begin(), by_rank.end());
    for (std::size_t i = 0; i < by_rank.size(); ++i) {
        if (by_rank[i].first != static_cast<int>(i) + 1) {
            throw std::invalid_argument("ranking positions must be exactly 1.." +
                                        std::to_string(by_rank.size()));
        }
    }
    Ranking r;
    r.source = source;
    for (const auto& [rank, task_id] : by_rank) {
        (void)rank;
        r.ordered_task_ids.push_back(task_id);
    }
    return r;
}

Ranking load_ranking(const std::string& path) {
    std::string source = path;
    const auto slash = source.find_last_of('/');
    if (slash != std::string::npos) source = source.substr(slash + 1);
    const auto dot = source.find_last_of('.');
    if (dot != std::string::npos) source = source.substr(0, dot);
    return parse_ranking(slurp(path, "ranking"), source);
}

std::string ranking_to_json(const Ranking& ranking) {
    json out;
    for (std::size_t i = 0; i < ranking.ordered_task_ids.size(); ++i) {
        out[ranking.ordered_task_ids[i]] = i + 1;
    }
    return out.dump(2) + "\n";
}

std::map<std::string, double> load_pass_rates(const std::string& path) {
    const json root = parse_json(slurp(path, "pass-rate"), "pass-rate file");
    if (!root.is_object()) {
        throw std::invalid_argument("pass-rate file must be a JSON map task id -> rate");
    }
    std::map<std::string, double> rates;
    for (const auto& [task_id, rate] : root.items()) {
        const double r = rate.get<double>();
        if (r < 0.0 || r > 1.0) {
            throw std::invalid_argument("pass rate of task '" + task_id +
                                        "' outside [0, 1]");
        }
        rates[task_id] = r;
    }
    return rates;
}

CapabilityMapping parse_mapping(const std::string& text) {
    const json root = parse_json(text, "mapping file");
    CapabilityMapping m;
    m.parameter_key = root.at("parameter_key").get<std::string>();
    m.benchmark_id = root.at("benchmark_id").get<std::string>();
    for (const auto& ja : root.at("anchors")) {
        CapabilityMapping::Anchor anchor;
        anchor.task_id = ja.at("task_id").get<std::string>();
        for (const auto& je : ja.at("estimates")) {
            ThreePointEstimate est;
            est.low = je.at("low").get<double>();
            est.mode = je.at("mode").get<double>();
            est.high = je.at("high").get<double>();
            est.confidence = je.at("confidence").get<double>();
            est.kind = je.contains("estimate_kind")
                           ? estimate_kind_from_string(
                                 je.at("estimate_kind").get<std::string>())
                           : EstimateKind::probability;
            check_estimate(est);
            const std::string expert = je.at("expert").get<std::string>();
            if (!anchor.estimates.emplace(expert, est).second) {
                throw std::invalid_argument("anchor '" + anchor.task_id +
                                            "' repeats expert '" + expert + "'");
            }
        }
        m.anchors.push_back(std::move(anchor));
    }
    if (m.anchors.empty()) {
        throw std::invalid_argument("mapping for '" + m.parameter_key +
                                    "' has no anchors");
    }
    return m;
}

CapabilityMapping load_mapping(const std::string& path) {
    return parse_mapping(slurp(path, "mapping"));
}

Ranking borda_aggregate(const std::vector<Ranking>& rankings,
                        const Benchmark& benchmark) {
    check_same_task_set(rankings);
    const std::size_t n = rankings[0].ordered_task_ids.size();
    std::map<std::string, std::size_t> score;
    for (const Ranking& r : rankings) {
        for (std::size_t pos = 0; pos < n; ++pos) {
            score[r.ordered_task_ids[pos]] += n - (pos + 1);
        }
    }
    std::vector<std::string> ids = rankings[0].ordered_task_ids;
    std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
        if (score.at(a) != score.at(b)) return score.at(a) > score.at(b);
        const auto& ta = benchmark.task(a);
        const auto& tb = benchmark.task(b);
        if (ta.isolated_score && tb.isolated_score &&
            *ta.isolated_score != *tb.isolated_score) {
            return *ta.isolated_score < *tb.isolated_score;  // easier first
        }
        return a < b;
    });
    Ranking out;
    out.source = "borda";
    out.ordered_task_ids = std::move(ids);
    return out;
}

double kendalls_w(const std::vector<Ranking>& rankings) {
    check_same_task_set(rankings);
    const std::int64_t m = static_cast<std::int64_t>(rankings.size());
    const std::int64_t n =
        static_cast<std::int64_t>(rankings[0].ordered_task_ids.size());
    if (m < 2 || n < 2) {
        throw std::invalid_argument("Kendall's W needs >= 2 rankings over >= 2 tasks");
    }
    std::map<std::string, std::int64_t> rank_sum;
    for (const Ranking& r : rankings) {
        for (std::size_t pos = 0; pos < r.ordered_task_ids.size(); ++pos) {
            rank_sum[r.ordered_task_ids[pos]] += static_cast<std::int64_t>(pos) + 1;
        }
    }
    // Integer arithmetic keeps the endpoints exact: with d_i = 2*R_i - m*(n+1),
    // W = 3 * sum d_i^2 / (m^2 * (n^3 - n)).
    std::int64_t sum_sq = 0;
    for (const auto& [task_id, sum] : rank_sum) {
        (void)task_id;
        const std::int64_t d = 2 * sum - m * (n + 1);
        sum_sq += d * d;
    }
    return 3.0 * static_cast<double>(sum_sq) /
           static_cast<double>(m * m * (n * n * n - n));
}

namespace {

std::set<std::string> tag_union(const Benchmark& benchmark,
                                const std::vector<std::string>& ids) {
    std::set<std::string> tags;
    for (const std::string& id : ids) {
        const auto& t = benchmark.task(id).tags;
        tags.insert(t.begin(), t.end());
    }
    return tags;
}

}  // namespace

std::vector<std::string> subsample(const Benchmark& benchmark,
                                   const Ranking& final_ranking,
                                   std::size_t target_size) {
    const std::vector<std::string>& ranked = final_ranking.ordered_task_ids;
    const std::size_t n = ranked.size();
    if (target_size == 0 || target_size > n) {
        throw std::invalid_argument("subsample target_size must be in 1.." +
                                    std::to_string(n));
    }

    // Initial picks at fixed intervals (1-based positions round((i+0.5)*n/k)).
    std::vector<std::size_t> picks;
    std::set<std::size_t> picked;
    for (std::size_t i = 0; i < target_size; ++i) {
        const double pos = std::round((static_cast<double>(i) + 0.5) *
                                      static_cast<double>(n) /
                                      static_cast<double>(target_size));
        std::size_t idx = static_cast<std::size_t>(pos) - 1;
        idx = std::min(idx, n - 1);
        while (picked.contains(idx) && idx + 1 < n) ++idx;
        picks.push_back(idx);
        picked.insert(idx);
    }

    // Greedy swap passes: try each pick's neighbors by increasing distance
    // (lower position first) and swap when the tag union strictly grows.
    std::size_t radius = 1;
    while (true) {
        bool improved = false;
        for (std::size_t slot = 0; slot < picks.size(); ++slot) {
            std::vector<std::string> current;
            for (std::size_t idx : picks) current.push_back(ranked[idx]);
            const std::size_t base_cover = tag_union(benchmark, current).size();

            for (std::size_t dist = 1; dist <= radius; ++dist) {
                bool swapped = false;
                const std::size_t pick = picks[slot];
                for (const std::ptrdiff_t offset :
                     {-static_cast<std::ptrdiff_t>(dist),
                      static_cast<std::ptrdiff_t>(dist)}) {
                    const std::ptrdiff_t cand =
                        static_cast<std::ptrdiff_t>(pick) + offset;
                    if (cand < 0 || cand >= static_cast<std::ptrdiff_t>(n)) continue;
                    const std::size_t cand_idx = static_cast<std::size_t>(cand);
                    if (picked.contains(cand_idx)) continue;
                    std::vector<std::string> trial = current;
                    trial[slot] = ranked[cand_idx];
                    if (tag_union(benchmark, trial).size() > base_cover) {
                        picked.erase(pick);
                        picked.insert(cand_idx);
                        picks[slot] = cand_idx;
                        improved = true;
                        swapped = true;
                        break;
                    }
                }
                if (swapped) break;
            }
        }
        if (!improved) break;
        radius = std::min<std::size_t>(radius + 1, 3);
    }

    std::sort(picks.begin(), picks.end());
    std::vector<std::string> out;
    for (std::size_t idx : picks) out.push_back(ranked[idx]);
    return out;
}

CapabilityLevel capability_from_scores(const Ranking& final_ranking,
                                       const std::map<std::string, double>& pass_rates,
                                       CapabilityRule rule) {
    constexpr double kQualify = 0.9;
    for (const std::string& task_id : final_ranking.ordered_task_ids) {
        if (!pass_rates.contains(task_id)) {
            throw std::invalid_argument("missing pass rate for task '" + task_id + "'");
        }
    }
    std::string level;
    for (const std::string& task_id : final_ranking.ordered_task_ids) {
        const double rate = pass_rates.at(task_id);
        if (rule == CapabilityRule::prefix) {
            if (rate < kQualify) break;
            level = task_id;
        } else if (rate >= kQualify) {
            level = task_id;
        }
    }
    if (level.empty()) return CapabilityLevel::floor();
    return CapabilityLevel::at(level);
}

namespace {

double axis_value(const CapabilityMapping& mapping, const Ranking& ranking,
                  const std::string& task_id, InterpolationAxis axis,
                  const Benchmark* benchmark) {
    if (axis == InterpolationAxis::log_fst) {
        if (benchmark == nullptr) {
            throw std::invalid_argument(
                "log_fst interpolation needs the benchmark for native difficulties");
        }
        const Task& t = benchmark->task(task_id);
        if (!t.native_difficulty || *t.native_difficulty <= 0.0) {
            throw std::invalid_argument("task '" + task_id +
                                        "' has no positive native_difficulty");
        }
        return std::log(*t.native_difficulty);
    }
    const auto& ids = ranking.ordered_task_ids;
    const auto it = std::find(ids.begin(), ids.end(), task_id);
    if (it == ids.end()) {
        throw std::invalid_argument("task '" + task_id +
                                    "' is not in the final ranking for benchmark '" +
                                    mapping.benchmark_id + "'");
    }
    return static_cast<double>(it - ids.begin());
}

const ThreePointEstimate& anchor_estimate(const CapabilityMapping::Anchor& anchor,
                                          const std::string& expert_id) {
    const auto it = anchor.estimates.find(expert_id);
    if (it == anchor.estimates.end()) {
        throw std::invalid_argument("expert '" + expert_id +
                                    "' missing from anchor '" + anchor.task_id + "'");
    }
    return it->second;
}

}  // namespace

ThreePointEstimate interpolate_mapping(const CapabilityMapping& mapping,
                                       const Ranking& final_ranking,
                                       const std::string& expert_id,
                                       const std::string& level_task_id,
                                       InterpolationAxis axis,
                                       const Benchmark* benchmark) {
    if (mapping.anchors.empty()) {
        throw std::invalid_argument("mapping has no anchors");
    }
    std::vector<double> xs;
    for (const auto& anchor : mapping.anchors) {
        xs.push_back(axis_value(mapping, final_ranking, anchor.task_id, axis, benchmark));
    }
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (!(xs[i] > xs[i - 1])) {
            throw std::invalid_argument(
                "mapping anchors must be strictly increasing in difficulty");
        }
    }
    const double x = axis_value(mapping, final_ranking, level_task_id, axis, benchmark);

    if (x <= xs.front()) {
        return anchor_estimate(mapping.anchors.front(), expert_id);
    }
    if (x >= xs.back()) {
        return anchor_estimate(mapping.anchors.back(), expert_id);
    }
    std::size_t hi = 1;
    while (xs[hi] < x) ++hi;
    if (xs[hi] == x) {
        return anchor_estimate(mapping.anchors[hi], expert_id);
    }
    const ThreePointEstimate& a = anchor_estimate(mapping.anchors[hi - 1], expert_id);
    const ThreePointEstimate& b = anchor_estimate(mapping.anchors[hi], expert_id);
    const double t = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
    ThreePointEstimate out;
    out.low = a.low + t * (b.low - a.low);
    out.mode = a.mode + t * (b.mode - a.mode);
    out.high = a.high + t * (b.high - a.high);
    out.confidence = a.confidence + t * (b.confidence - a.confidence);
    out.kind = a.kind;
    return out;
}

UpliftResult apply_uplift(const RiskModel& model, const ExpertMixture& baseline,
                          const std::vector<CapabilityMapping>& mappings,
                          const std::map<std::string, Ranking>& rankings_by_benchmark,
                          const CapabilityLevel& level, double skip_threshold,
                          InterpolationAxis axis, const Benchmark* benchmark) {
    std::set<std::string> model_params;
    for (const Node& node : model.nodes) {
        if (node.parameter_key) model_params.insert(*node.parameter_key);
    }
    std::set<std::string> mapped;
    for (const auto& mapping : mappings) {
        if (!model_params.contains(mapping.parameter_key)) {
            throw std::invalid_argument("mapping references unknown parameter '" +
                                        mapping.parameter_key + "'");
        }
        if (!mapped.insert(mapping.parameter_key).second) {
            throw std::invalid_argument("parameter '" + mapping.parameter_key +
                                        "' has more than one mapping");
        }
    }

    UpliftResult result;
    result.mixture = baseline;
    result.level = level;

    if (level.below_floor) {
        result.mixture.active_level.clear();
        for (const auto& mapping : mappings) {
            result.skipped.emplace_back(mapping.parameter_key,
                                        "capability below_floor: baseline retained");
        }
        return result;
    }

    result.mixture.active_level = level.task_id;
    for (const auto& mapping : mappings) {
        // Expert sets must agree between the baseline mixture and the anchors.
        for (const auto& expert : baseline.experts) {
            for (const auto& anchor : mapping.anchors) {
                if (!anchor.estimates.contains(expert.id)) {
                    throw std::invalid_argument(
                        "mapping for '" + mapping.parameter_key + "' anchor '" +
                        anchor.task_id + "' is missing expert '" + expert.id + "'");
                }
            }
        }

        std::vector<double> baseline_modes;
        for (const auto& expert : baseline.experts) {
            const auto& components = baseline.components.at(expert.id);
            const auto pit = components.find(mapping.parameter_key);
            if (pit == components.end() || !pit->second.contains("")) {
                throw std::invalid_argument("baseline mixture has no entry for '" +
                                            mapping.parameter_key + "' (expert '" +
                                            expert.id + "')");
            }
            baseline_modes.push_back(distribution_mode(pit->second.at("")));
        }
        const double baseline_mode = stats::median(std::move(baseline_modes));
        if (baseline_mode > skip_threshold) {
            result.skipped.emplace_back(mapping.parameter_key, "baseline>threshold");
            continue;
        }

        const auto rit = rankings_by_benchmark.find(mapping.benchmark_id);
        if (rit == rankings_by_benchmark.end()) {
            throw std::invalid_argument("no final ranking supplied for benchmark '" +
                                        mapping.benchmark_id + "'");
        }
        for (const auto& expert : baseline.experts) {
            const ThreePointEstimate est = interpolate_mapping(
                mapping, rit->second, expert.id, level.task_id, axis, benchmark);
            result.mixture.components[expert.id][mapping.parameter_key][level.task_id] =
                fit_estimate(est);
        }
        result.applied.push_back(mapping.parameter_key);
    }
    return result;
}

}  // namespace riskquant
