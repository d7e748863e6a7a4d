// riskquant — command-line front end for the risk quantification engine.
// Every subcommand is a thin composition of library operations; no numeric
// logic lives here.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "riskquant/elicitation.hpp"
#include "riskquant/engine.hpp"
#include "riskquant/estimator.hpp"
#include "riskquant/kri.hpp"
#include "riskquant/model.hpp"

using nlohmann::json;
using namespace riskquant;

namespace {

// Exit codes: 0 success, 1 domain error, 2 usage error.
constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write output file '" + out_path + "'");
    }
    out << text;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json report_to_json(const ValidationReport& report) {
    json j;
    j["ok"] = report.ok;
    json issues = json::array();
    for (const auto& issue : report.issues) {
        issues.push_back(
            {{"severity", issue.severity == IssueSeverity::error ? "error" : "warning"},
             {"where", issue.where},
             {"message", issue.message}});
    }
    j["issues"] = std::move(issues);
    return j;
}

struct SimFlags {
    std::uint64_t seed = 42;
    std::size_t draws = 100000;
    std::size_t shards = 1;
    std::string count_model = "poisson";

    SimulationConfig config() const {
        SimulationConfig cfg;
        cfg.seed = seed;
        cfg.n_draws = draws;
        cfg.parallel_shards = shards;
        cfg.incident_count_model = count_model == "poisson"
                                       ? IncidentCountModel::poisson
                                       : IncidentCountModel::expected_value;
        return cfg;
    }
};

void add_sim_flags(CLI::App* cmd, SimFlags& flags) {
    cmd->add_option("--seed", flags.seed, "Random seed (fully determines output)");
    cmd->add_option("--draws", flags.draws, "Monte Carlo draw count")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--shards", flags.shards,
                    "Parallel shards (does not change results)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--count-model", flags.count_model,
                    "Incident count model: poisson or expected_value")
        ->check(CLI::IsMember({"poisson", "expected_value"}));
}

ExpertMixture mixture_from_inputs(const std::string& estimates_path,
                                  const std::string& fits_path) {
    if (!fits_path.empty()) {
        return mixture_from_json(json::parse(slurp(fits_path)));
    }
    std::vector<EstimateRecord> round2;
    for (const auto& record : load_records(estimates_path)) {
        if (record.round == 2 && record.capability_level.empty()) {
            round2.push_back(record);
        }
    }
    if (round2.empty()) {
        throw std::runtime_error(
            "no round-2 baseline records found in '" + estimates_path + "'");
    }
    return build_mixture(round2);
}

RiskModel load_validated_model(const std::string& path) {
    RiskModel model = load_model(path);
    const ValidationReport report = validate(model);
    if (!report.ok) {
        throw std::runtime_error("model '" + path + "' failed validation:\n" +
                                 report.to_text());
    }
    return model;
}

std::string summary_text(const json& result) {
    std::ostringstream out;
    const auto& summary = result.at("summary");
    out << "model: " << result.at("model_id").get<std::string>()
        << "  (horizon " << result.at("horizon_years").get<double>()
        << " years, harm unit " << result.at("harm_unit").get<std::string>()
        << ")\n";
    out << "draws: " << result.at("config").at("n_draws").get<std::size_t>()
        << "  seed: " << result.at("config").at("seed").get<std::uint64_t>()
        << "  count model: "
        << result.at("config").at("incident_count_model").get<std::string>()
        << "\n\n";
    auto row = [&](const char* name, const json& stats) {
        out << name << "\n";
        out << "  mean " << stats.at("mean").get<double>() << "   median "
            << stats.at("median").get<double>() << "   q05 "
            << stats.at("q05").get<double>() << "   q95 "
            << stats.at("q95").get<double>() << "\n";
    };
    row("P(>=1 incident / horizon)", summary.at("p_geq_one"));
    row("expected annual damage", summary.at("expected_annual_damage"));
    out << "\nper-node mean value\n";
    for (const auto& [node, mean] : summary.at("per_node_mean").items()) {
        out << "  " << node << ": " << mean.get<double>() << "\n";
    }
    out << "\nper-expert conditional means\n";
    for (const auto& slice : summary.at("per_expert")) {
        out << "  " << slice.at("expert").get<std::string>() << ": draws "
            << slice.at("draws").get<std::size_t>() << ", p>=1 "
            << slice.at("mean_p_geq_one").get<double>() << ", damage "
            << slice.at("mean_expected_annual_damage").get<double>() << "\n";
    }
    const auto saturated = summary.at("saturated_draws").get<std::size_t>();
    if (saturated > 0) {
        out << "\nwarning: " << saturated
            << " draw(s) hit the damage saturation cap\n";
    }
    return out.str();
}

std::string summary_csv(const json& result) {
    std::ostringstream out;
    out << "metric,stat,value\n";
    const auto& summary = result.at("summary");
    for (const char* metric : {"p_geq_one", "expected_annual_damage"}) {
        for (const char* stat : {"mean", "median", "q05", "q95"}) {
            out << metric << ',' << stat << ','
                << summary.at(metric).at(stat).get<double>() << "\n";
        }
    }
    for (const auto& [node, mean] : summary.at("per_node_mean").items()) {
        out << "per_node_mean," << node << ',' << mean.get<double>() << "\n";
    }
    for (const auto& slice : summary.at("per_expert")) {
        out << "per_expert_mean_damage," << slice.at("expert").get<std::string>()
            << ',' << slice.at("mean_expected_annual_damage").get<double>() << "\n";
    }
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"riskquant — quantitative AI risk scenario toolkit"};
    app.require_subcommand(1);
    int exit_code = kExitOk;

    // ---- validate -----------------------------------------------------
    auto* validate_cmd = app.add_subcommand("validate", "Check a model file");
    std::string model_path, out_path;
    validate_cmd->add_option("--model", model_path, "Model file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    validate_cmd->add_option("--out", out_path, "Write the report here");
    validate_cmd->callback([&] {
        const RiskModel model = load_model(model_path);
        const ValidationReport report = validate(model);
        emit(report_to_json(report).dump(2) + "\n", out_path);
        std::cerr << report.to_text();
        if (!report.ok) exit_code = kExitDomain;
    });

    // ---- fit ----------------------------------------------------------
    auto* fit_cmd = app.add_subcommand("fit", "Fit distributions to estimates");
    std::string fit_estimates, fit_out;
    int fit_round = 2;
    fit_cmd->add_option("--estimates", fit_estimates, "Estimate records (JSON/CSV)")
        ->required()
        ->check(CLI::ExistingFile);
    fit_cmd->add_option("--round", fit_round, "Round to fit (1 or 2)")
        ->check(CLI::Range(1, 2));
    fit_cmd->add_option("--out", fit_out, "Write fits here");
    fit_cmd->callback([&] {
        json out = json::array();
        for (const auto& record : load_records(fit_estimates)) {
            if (record.round != fit_round) continue;
            FitReport fr;
            const FittedDistribution dist = fit_estimate(record.estimate, &fr);
            json entry;
            entry["expert"] = record.expert.id;
            entry["parameter_key"] = record.parameter_key;
            entry["capability_level"] = record.capability_level.empty()
                                            ? "baseline"
                                            : record.capability_level;
            entry["fit"] = dist_to_json(dist);
            entry["residual"] = fr.residual;
            entry["converged"] = fr.converged;
            out.push_back(std::move(entry));
        }
        if (out.empty()) {
            throw std::runtime_error("no records for round " +
                                     std::to_string(fit_round));
        }
        emit(out.dump(2) + "\n", fit_out);
    });

    // ---- simulate -------------------------------------------------------
    auto* sim_cmd = app.add_subcommand("simulate", "Run the Monte Carlo engine");
    std::string sim_model, sim_estimates, sim_fits, sim_out, sim_csv;
    SimFlags sim_flags;
    sim_cmd->add_option("--model", sim_model, "Model file")
        ->required()
        ->check(CLI::ExistingFile);
    sim_cmd->add_option("--estimates", sim_estimates, "Estimate records (JSON/CSV)")
        ->check(CLI::ExistingFile);
    sim_cmd->add_option("--fits", sim_fits, "Fitted mixture file (from uplift)")
        ->check(CLI::ExistingFile);
    add_sim_flags(sim_cmd, sim_flags);
    sim_cmd->add_option("--out", sim_out, "Write the result JSON here");
    sim_cmd->add_option("--draws-csv", sim_csv, "Write per-draw outcomes as CSV");
    sim_cmd->callback([&] {
        if (sim_estimates.empty() == sim_fits.empty()) {
            throw CLI::ValidationError(
                "simulate needs exactly one of --estimates or --fits");
        }
        const RiskModel model = load_validated_model(sim_model);
        const ExpertMixture mixture = mixture_from_inputs(sim_estimates, sim_fits);
        const SimulationResult result = simulate(model, mixture, sim_flags.config());
        emit(result_to_json(result, mixture).dump(2) + "\n", sim_out);
        if (!sim_csv.empty()) emit(draws_to_csv(result), sim_csv);
    });

    // ---- uplift ---------------------------------------------------------
    auto* up_cmd =
        app.add_subcommand("uplift", "Condition a model on a capability level");
    std::string up_model, up_estimates, up_scores, up_ranking, up_benchmark;
    std::string up_level, up_out, up_out_fits, up_rule = "prefix", up_axis = "rank";
    std::vector<std::string> up_mappings;
    double up_threshold = 0.85;
    up_cmd->add_option("--model", up_model, "Model file")
        ->required()
        ->check(CLI::ExistingFile);
    up_cmd->add_option("--estimates", up_estimates, "Baseline estimate records")
        ->required()
        ->check(CLI::ExistingFile);
    up_cmd->add_option("--mapping", up_mappings, "Capability mapping file(s)")
        ->required()
        ->check(CLI::ExistingFile);
    up_cmd->add_option("--scores", up_scores, "Pass-rate file (task id -> rate)")
        ->check(CLI::ExistingFile);
    up_cmd->add_option("--level", up_level,
                       "Capability level task id (overrides --scores)");
    up_cmd->add_option("--ranking", up_ranking,
                       "Final difficulty ranking (defaults to anchor order)")
        ->check(CLI::ExistingFile);
    up_cmd->add_option("--benchmark", up_benchmark,
                       "Benchmark file (needed for --axis log_fst)")
        ->check(CLI::ExistingFile);
    up_cmd->add_option("--threshold", up_threshold,
                       "Skip-rule threshold on the baseline mode");
    up_cmd->add_option("--rule", up_rule, "Capability rule: prefix or anywhere")
        ->check(CLI::IsMember({"prefix", "anywhere"}));
    up_cmd->add_option("--axis", up_axis, "Interpolation axis: rank or log_fst")
        ->check(CLI::IsMember({"rank", "log_fst"}));
    up_cmd->add_option("--out", up_out, "Write the uplift report here");
    up_cmd->add_option("--out-fits", up_out_fits,
                       "Write the conditioned mixture for `simulate --fits`");
    up_cmd->callback([&] {
        const RiskModel model = load_validated_model(up_model);
        const ExpertMixture baseline = mixture_from_inputs(up_estimates, "");

        std::vector<CapabilityMapping> mappings;
        for (const auto& path : up_mappings) mappings.push_back(load_mapping(path));

        std::map<std::string, Ranking> rankings;
        if (!up_ranking.empty()) {
            const Ranking r = load_ranking(up_ranking);
            for (const auto& m : mappings) rankings[m.benchmark_id] = r;
        } else {
            // Anchor order stands in for the full difficulty ranking.
            for (const auto& m : mappings) {
                Ranking r;
                r.source = "anchor_order:" + m.parameter_key;
                for (const auto& anchor : m.anchors) {
                    r.ordered_task_ids.push_back(anchor.task_id);
                }
                rankings[m.benchmark_id] = r;
            }
        }

        CapabilityLevel level;
        if (!up_level.empty()) {
            level = CapabilityLevel::at(up_level);
        } else if (!up_scores.empty()) {
            if (rankings.size() != 1) {
                throw std::runtime_error(
                    "--scores needs a single benchmark ranking to resolve the level");
            }
            level = capability_from_scores(rankings.begin()->second,
                                           load_pass_rates(up_scores),
                                           up_rule == "prefix"
                                               ? CapabilityRule::prefix
                                               : CapabilityRule::anywhere);
        } else {
            throw CLI::ValidationError("uplift needs --level or --scores");
        }

        std::optional<Benchmark> benchmark;
        if (!up_benchmark.empty()) benchmark = load_benchmark(up_benchmark);
        const UpliftResult result = apply_uplift(
            model, baseline, mappings, rankings, level, up_threshold,
            up_axis == "rank" ? InterpolationAxis::rank_index
                              : InterpolationAxis::log_fst,
            benchmark ? &*benchmark : nullptr);

        json report;
        report["level"] =
            result.level.below_floor ? "below_floor" : result.level.task_id;
        report["threshold"] = up_threshold;
        report["applied"] = result.applied;
        json skipped = json::array();
        for (const auto& [param, reason] : result.skipped) {
            skipped.push_back({{"parameter", param}, {"reason", reason}});
        }
        report["skipped"] = std::move(skipped);
        report["fitted_parameters"] = mixture_to_json(result.mixture);
        emit(report.dump(2) + "\n", up_out);
        if (!up_out_fits.empty()) {
            emit(mixture_to_json(result.mixture).dump(2) + "\n", up_out_fits);
        }
    });

    // ---- rank -----------------------------------------------------------
    auto* rank_cmd =
        app.add_subcommand("rank", "Aggregate difficulty rankings (Borda + W)");
    std::vector<std::string> rank_files;
    std::string rank_benchmark, rank_config, rank_out, rank_out_dir;
    bool rank_live = false;
    rank_cmd->add_option("--rankings", rank_files, "Ranking files (task id -> rank)")
        ->check(CLI::ExistingFile);
    rank_cmd->add_option("--benchmark", rank_benchmark, "Benchmark file")
        ->required()
        ->check(CLI::ExistingFile);
    rank_cmd->add_flag("--live", rank_live,
                       "Generate the three automatic rankings via the estimator");
    rank_cmd->add_option("--config", rank_config, "Endpoint config for --live")
        ->check(CLI::ExistingFile);
    rank_cmd->add_option("--out", rank_out, "Write the aggregate report here");
    rank_cmd->add_option("--out-dir", rank_out_dir,
                         "Write generated ranking files here (--live)");
    rank_cmd->callback([&] {
        const Benchmark benchmark = load_benchmark(rank_benchmark);
        std::vector<Ranking> rankings;
        json scores_echo;
        if (rank_live) {
            if (rank_config.empty()) {
                throw CLI::ValidationError("--live needs --config");
            }
            const RankingSet set =
                generate_rankings(benchmark, load_endpoint_config(rank_config));
            rankings = {set.isolated, set.easiest_first, set.hardest_first};
            for (const auto& [task, score] : set.isolated_scores) {
                scores_echo[task] = score;
            }
            if (!rank_out_dir.empty()) {
                for (const Ranking& r : rankings) {
                    emit(ranking_to_json(r),
                         rank_out_dir + "/" + r.source + ".json");
                }
            }
        } else {
            if (rank_files.empty()) {
                throw CLI::ValidationError("rank needs --rankings or --live");
            }
            for (const auto& path : rank_files) rankings.push_back(load_ranking(path));
        }
        const Ranking final_ranking = borda_aggregate(rankings, benchmark);
        json report;
        json final_map;
        for (std::size_t i = 0; i < final_ranking.ordered_task_ids.size(); ++i) {
            final_map[final_ranking.ordered_task_ids[i]] = i + 1;
        }
        report["final_ranking"] = std::move(final_map);
        report["order"] = final_ranking.ordered_task_ids;
        if (rankings.size() >= 2) {
            report["kendalls_w"] = kendalls_w(rankings);
        }
        json sources = json::array();
        for (const Ranking& r : rankings) sources.push_back(r.source);
        report["sources"] = std::move(sources);
        if (!scores_echo.is_null()) report["isolated_scores"] = scores_echo;
        emit(report.dump(2) + "\n", rank_out);
    });

    // ---- subsample --------------------------------------------------------
    auto* sub_cmd =
        app.add_subcommand("subsample", "Pick a difficulty-stratified task subset");
    std::string sub_benchmark, sub_ranking, sub_out;
    std::size_t sub_target = 5;
    sub_cmd->add_option("--benchmark", sub_benchmark, "Benchmark file")
        ->required()
        ->check(CLI::ExistingFile);
    sub_cmd->add_option("--ranking", sub_ranking, "Final difficulty ranking")
        ->required()
        ->check(CLI::ExistingFile);
    sub_cmd->add_option("--target", sub_target, "Subsample size")
        ->required()
        ->check(CLI::PositiveNumber);
    sub_cmd->add_option("--out", sub_out, "Write the task id list here");
    sub_cmd->callback([&] {
        const auto picked = subsample(load_benchmark(sub_benchmark),
                                      load_ranking(sub_ranking), sub_target);
        emit(json(picked).dump(2) + "\n", sub_out);
    });

    // ---- sensitivity --------------------------------------------------
    auto* sens_cmd =
        app.add_subcommand("sensitivity", "Parameter and expert influence analysis");
    std::string sens_model, sens_estimates, sens_fits, sens_out;
    std::string sens_format = "csv";
    SimFlags sens_flags;
    sens_cmd->add_option("--model", sens_model, "Model file")
        ->required()
        ->check(CLI::ExistingFile);
    sens_cmd->add_option("--estimates", sens_estimates, "Estimate records")
        ->check(CLI::ExistingFile);
    sens_cmd->add_option("--fits", sens_fits, "Fitted mixture file")
        ->check(CLI::ExistingFile);
    add_sim_flags(sens_cmd, sens_flags);
    sens_cmd->add_option("--format", sens_format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    sens_cmd->add_option("--out", sens_out, "Write the report here");
    sens_cmd->callback([&] {
        if (sens_estimates.empty() == sens_fits.empty()) {
            throw CLI::ValidationError(
                "sensitivity needs exactly one of --estimates or --fits");
        }
        const RiskModel model = load_validated_model(sens_model);
        const ExpertMixture mixture =
            mixture_from_inputs(sens_estimates, sens_fits);
        const SensitivityReport report =
            sensitivity(model, mixture, sens_flags.config());
        if (sens_format == "csv") {
            emit(sensitivity_to_csv(report), sens_out);
        } else {
            emit(sensitivity_to_json(report).dump(2) + "\n", sens_out);
        }
    });

    // ---- elicit-summary -------------------------------------------------
    auto* elicit_cmd = app.add_subcommand(
        "elicit-summary", "Round medians and disagreement ranking");
    std::string el_records, el_out, el_format = "json";
    int el_round = 1;
    elicit_cmd->add_option("--records", el_records, "Estimate records (JSON/CSV)")
        ->required()
        ->check(CLI::ExistingFile);
    elicit_cmd->add_option("--round", el_round, "Round to summarize")
        ->check(CLI::Range(1, 2));
    elicit_cmd->add_option("--format", el_format, "json or text")
        ->check(CLI::IsMember({"json", "text"}));
    elicit_cmd->add_option("--out", el_out, "Write the summary here");
    elicit_cmd->callback([&] {
        std::vector<EstimateRecord> records;
        for (const auto& record : load_records(el_records)) {
            if (record.round == el_round) records.push_back(record);
        }
        if (records.empty()) {
            throw std::runtime_error("no round-" + std::to_string(el_round) +
                                     " records in '" + el_records + "'");
        }
        const auto summaries = summarize_round(records, el_round);
        std::vector<DisagreementEntry> disagreement;
        bool disagreement_available = true;
        try {
            disagreement = disagreement_ranking(records);
        } catch (const std::invalid_argument&) {
            disagreement_available = false;  // single-expert data
        }
        if (el_format == "text") {
            std::ostringstream out;
            out << "round " << el_round << " summary\n";
            for (const auto& s : summaries) {
                out << "  " << s.parameter_key;
                if (!s.capability_level.empty()) out << " @ " << s.capability_level;
                out << ": median mode " << s.median_mode << ", range ["
                    << s.min_low << ", " << s.max_high << "], experts "
                    << s.rows.size() << "\n";
            }
            if (disagreement_available) {
                out << "disagreement ranking (most contested first)\n";
                for (const auto& d : disagreement) {
                    out << "  " << d.parameter_key;
                    if (!d.capability_level.empty()) out << " @ " << d.capability_level;
                    out << ": score " << d.score << (d.zero_median ? " (abs IQR)" : "")
                        << "\n";
                }
            }
            emit(out.str(), el_out);
            return;
        }
        json j;
        j["round"] = el_round;
        json js = json::array();
        for (const auto& s : summaries) {
            json entry;
            entry["parameter_key"] = s.parameter_key;
            entry["capability_level"] =
                s.capability_level.empty() ? "baseline" : s.capability_level;
            entry["median_mode"] = s.median_mode;
            entry["min_low"] = s.min_low;
            entry["max_high"] = s.max_high;
            json rows = json::array();
            for (const auto& r : s.rows) {
                rows.push_back({{"expert", r.expert.id},
                                {"low", r.estimate.low},
                                {"mode", r.estimate.mode},
                                {"high", r.estimate.high},
                                {"confidence", r.estimate.confidence},
                                {"rationale", r.rationale}});
            }
            entry["experts"] = std::move(rows);
            js.push_back(std::move(entry));
        }
        j["summaries"] = std::move(js);
        if (disagreement_available) {
            json jd = json::array();
            for (const auto& d : disagreement) {
                jd.push_back({{"parameter_key", d.parameter_key},
                              {"capability_level",
                               d.capability_level.empty() ? "baseline"
                                                          : d.capability_level},
                              {"score", d.score},
                              {"iqr", d.iqr},
                              {"median_mode", d.median_mode},
                              {"zero_median", d.zero_median}});
            }
            j["disagreement"] = std::move(jd);
        }
        emit(j.dump(2) + "\n", el_out);
    });

    // ---- estimate ---------------------------------------------------------
    auto* est_cmd =
        app.add_subcommand("estimate", "Run the simulated expert panel");
    std::string est_config, est_context, est_profiles, est_audit, est_out;
    std::string est_export, est_param, est_level;
    int est_round = 2;
    est_cmd->add_option("--config", est_config, "Endpoint config file")
        ->required()
        ->check(CLI::ExistingFile);
    est_cmd->add_option("--context", est_context, "Prompt context file")
        ->required()
        ->check(CLI::ExistingFile);
    est_cmd->add_option("--profiles", est_profiles,
                        "Expert profile file (default: built-in panel)")
        ->check(CLI::ExistingFile);
    est_cmd->add_option("--audit", est_audit, "Append the transcript here (JSONL)");
    est_cmd->add_option("--out", est_out, "Write the panel result here");
    est_cmd->add_option("--export-records", est_export,
                        "Also export EstimateRecords to this file");
    est_cmd->add_option("--parameter-key", est_param,
                        "Parameter key for exported records");
    est_cmd->add_option("--level", est_level,
                        "Capability level for exported records");
    est_cmd->add_option("--round", est_round, "Round for exported records")
        ->check(CLI::Range(1, 2));
    est_cmd->callback([&] {
        EndpointConfig cfg = load_endpoint_config(est_config);
        if (!est_audit.empty()) cfg.audit_log_path = est_audit;
        const PromptContext ctx = load_prompt_context(est_context);
        const std::vector<ExpertProfile> profiles =
            est_profiles.empty() ? default_profiles() : load_profiles(est_profiles);
        const PanelResult panel = run_panel_estimate(ctx, profiles, cfg);

        json j;
        j["aggregate"] = panel.aggregate;
        j["any_failed"] = panel.any_failed;
        json per = json::array();
        for (const auto& pe : panel.per_profile) {
            json entry;
            entry["profile"] = pe.profile_name;
            entry["ok"] = pe.ok;
            entry["parse_retries_used"] = pe.parse_retries_used;
            if (pe.ok) {
                entry["final"] = pe.estimate.final;
                entry["minimum"] = pe.estimate.minimum;
                entry["maximum"] = pe.estimate.maximum;
                entry["confidence_in_range"] = pe.estimate.confidence_in_range;
                entry["confidence_conflict"] = pe.estimate.confidence_conflict;
                entry["rationale"] = pe.estimate.rationale;
            } else {
                entry["error"] = pe.error;
            }
            per.push_back(std::move(entry));
        }
        j["per_profile"] = std::move(per);
        emit(j.dump(2) + "\n", est_out);

        if (!est_export.empty()) {
            if (est_param.empty()) {
                throw CLI::ValidationError("--export-records needs --parameter-key");
            }
            emit(records_to_json(
                     panel_to_records(panel, est_param, est_level, est_round)),
                 est_export);
        }
    });

    // ---- consistency ------------------------------------------------------
    auto* cons_cmd = app.add_subcommand(
        "consistency", "Internal-consistency check on paired estimates");
    std::string cons_pairs, cons_out;
    double cons_abs = 0.036, cons_rel = 0.0573;
    cons_cmd->add_option("--pairs", cons_pairs, "JSON array of [a, b] pairs")
        ->required()
        ->check(CLI::ExistingFile);
    cons_cmd->add_option("--abs", cons_abs, "Mean absolute distance threshold");
    cons_cmd->add_option("--rel", cons_rel, "Mean relative distance threshold");
    cons_cmd->add_option("--out", cons_out, "Write the report here");
    cons_cmd->callback([&] {
        const json root = json::parse(slurp(cons_pairs));
        std::vector<std::pair<double, double>> pairs;
        for (const auto& jp : root) {
            pairs.emplace_back(jp.at(0).get<double>(), jp.at(1).get<double>());
        }
        const ConsistencyReport report = consistency_check(pairs, cons_abs, cons_rel);
        json j;
        j["mean_absolute"] = report.mean_absolute;
        j["mean_relative"] = report.mean_relative;
        j["pass_absolute"] = report.pass_absolute;
        j["pass_relative"] = report.pass_relative;
        j["pass"] = report.pass;
        json jp = json::array();
        for (const auto& p : report.pairs) {
            jp.push_back({{"a", p.a},
                          {"b", p.b},
                          {"absolute", p.absolute},
                          {"relative", p.relative}});
        }
        j["pairs"] = std::move(jp);
        emit(j.dump(2) + "\n", cons_out);
        if (!report.pass) exit_code = kExitDomain;
    });

    // ---- report -------------------------------------------------------
    auto* report_cmd =
        app.add_subcommand("report", "Render a simulation result file");
    std::string rep_result, rep_out, rep_format = "text";
    report_cmd->add_option("--result", rep_result, "Result JSON from `simulate`")
        ->required()
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--format", rep_format, "text or csv")
        ->check(CLI::IsMember({"text", "csv"}));
    report_cmd->add_option("--out", rep_out, "Write the rendering here");
    report_cmd->callback([&] {
        const json result = json::parse(slurp(rep_result));
        emit(rep_format == "text" ? summary_text(result) : summary_csv(result),
             rep_out);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    return exit_code;
}
