#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "riskquant/estimator.hpp"
#include "mock_chat.hpp"

using namespace riskquant;

namespace {

PromptContext full_context() {
    PromptContext ctx;
    ctx.scenario_name = "double-extortion ransomware against a mid-size firm";
    ctx.threat_actor_name = "organized crime group";
    ctx.threat_actor_description =
        "Financially motivated affiliate crew with commodity tooling.";
    ctx.target_name = "regional logistics company";
    ctx.target_description = "A 400-seat firm with a small security team.";
    ctx.scenario_description = "Ransomware with data theft for extortion.";
    ctx.step_name = "payload execution";
    ctx.step_description = "Run adversary-controlled code on victim endpoints.";
    ctx.step_assumptions = "Initial access has already succeeded.";
    ctx.benchmark_description = "Offensive-security challenge suite.";
    ctx.task_name = "loader_evasion";
    ctx.task_description = "Build a loader that evades signature AV.";
    ctx.task_metrics = "- First solve time: 45 minutes";
    return ctx;
}

ExpertProfile red_team_profile() { return default_profiles().front(); }

const char* kCanonicalEstimate =
    "Final probability: 0.42\n"
    "Minimum probability: 0.30\n"
    "Maximum probability: 0.55\n"
    "Confidence in range: 0.85\n"
    "Rationale: tooling uplift outweighs endpoint controls";

EndpointConfig mock_config(const testutil::MockChat& mock) {
    EndpointConfig cfg;
    cfg.base_url = mock.base_url();
    cfg.model = "mock-model";
    cfg.transport_retries = 1;
    cfg.backoff_base_ms = 1;
    return cfg;
}

std::string estimate_block(double value) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "Final probability: %.2f\nMinimum probability: %.2f\n"
                  "Maximum probability: %.2f\nConfidence in range: 0.90\n"
                  "Rationale: scripted",
                  value, value - 0.1, value + 0.1);
    return buf;
}

}  // namespace

TEST_CASE("rendering substitutes every placeholder") {
    const std::string out =
        render_prompt(TemplateId::analysis, full_context(), red_team_profile());
    CHECK(out.find("Build a loader that evades signature AV.") != std::string::npos);
    CHECK(out.find('{') == std::string::npos);
    CHECK(out.find("First solve time: 45 minutes") != std::string::npos);
}

TEST_CASE("missing context variables are named") {
    PromptContext ctx = full_context();
    ctx.task_name.reset();
    CHECK_THROWS_WITH_AS(
        (void)render_prompt(TemplateId::analysis, ctx, red_team_profile()),
        "missing template variable 'task_name'", std::invalid_argument);

    // The estimate template needs the stage-1 analysis injected.
    PromptContext no_analysis = full_context();
    CHECK_THROWS_WITH_AS(
        (void)render_prompt(TemplateId::estimate, no_analysis, red_team_profile()),
        "missing template variable 'technical_analysis'", std::invalid_argument);
}

TEST_CASE("system prompt matches the golden rendering byte for byte") {
    const std::string rendered =
        render_prompt(TemplateId::system, full_context(), red_team_profile());
    std::ifstream in(std::string(RISKQUANT_TEST_DIR) + "/golden/system_red_team.txt",
                     std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    CHECK(rendered == buf.str());
}

TEST_CASE("estimate output parsing") {
    const ParsedEstimate e = parse_estimate_output(kCanonicalEstimate);
    CHECK(e.final == 0.42);
    CHECK(e.minimum == 0.30);
    CHECK(e.maximum == 0.55);
    CHECK(e.confidence_in_range == 0.85);
    CHECK(e.rationale == "tooling uplift outweighs endpoint controls");
    CHECK(e.confidence_conflict);  // 0.85 differs from the 90% guideline

    CHECK_FALSE(parse_estimate_output(estimate_block(0.4)).confidence_conflict);
}

TEST_CASE("parsing rejects out-of-range and inconsistent values") {
    CHECK_THROWS_AS((void)parse_estimate_output("Final probability: 1.5\n"
                                                "Minimum probability: 0.3\n"
                                                "Maximum probability: 0.6\n"
                                                "Confidence in range: 0.9\n"
                                                "Rationale: x"),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)parse_estimate_output("Final probability: 0.2\n"
                                                "Minimum probability: 0.5\n"
                                                "Maximum probability: 0.4\n"
                                                "Confidence in range: 0.9\n"
                                                "Rationale: x"),
                    std::invalid_argument);
    CHECK_THROWS_WITH_AS((void)parse_estimate_output("no labeled lines here"),
                         "missing field 'Final probability' in estimate output",
                         std::invalid_argument);
}

TEST_CASE("parsing tolerates surrounding prose") {
    // Transcript shaped like a real reasoning-heavy reply, hand-verified.
    const std::string transcript = R"(Step 1: The loader task implies solid
binary tooling; correlated skills include scripting and basic evasion.

Step 2: The plausible floor is near the unassisted baseline of 0.25, while a
strong ceiling pushes towards 0.6 given automated iteration on detections.

Step 3: Weighing detection response times most heavily, I land near 0.4.

Step 4: A 0.4/0.25 ratio of 1.6x uplift is within observed tool-assist gains.
Wait, does this actually make sense? Yes, given the weak SOC assumption.

Step 5: Settling slightly above the midpoint of my range.

Final probability: 0.42
Minimum probability: 0.30
Maximum probability: 0.55
Confidence in range: 0.85
Rationale: tooling uplift outweighs endpoint controls)";
    const ParsedEstimate canonical = parse_estimate_output(kCanonicalEstimate);
    const ParsedEstimate parsed = parse_estimate_output(transcript);
    CHECK(parsed.final == canonical.final);
    CHECK(parsed.minimum == canonical.minimum);
    CHECK(parsed.maximum == canonical.maximum);
    CHECK(parsed.confidence_in_range == canonical.confidence_in_range);
    CHECK(parsed.rationale == canonical.rationale);
}

TEST_CASE("five-profile panel aggregates the arithmetic mean") {
    testutil::MockChat mock;
    const auto profiles = default_profiles();
    REQUIRE(profiles.size() == 5);
    for (const double v : {0.2, 0.3, 0.4, 0.5, 0.6}) {
        mock.script_content("analysis text");
        mock.script_content(estimate_block(v));
    }
    const PanelResult panel =
        run_panel_estimate(full_context(), profiles, mock_config(mock));
    CHECK(panel.aggregate == doctest::Approx(0.4).epsilon(1e-12));
    CHECK_FALSE(panel.any_failed);
    REQUIRE(panel.per_profile.size() == 5);
    for (const auto& pe : panel.per_profile) {
        CHECK(pe.ok);
        CHECK(pe.analysis_text == "analysis text");
    }

    // Two requests per profile, each with system + user and temperature 1.0.
    const auto requests = mock.requests();
    REQUIRE(requests.size() == 10);
    for (const auto& body : requests) {
        const auto j = nlohmann::json::parse(body);
        CHECK(j.at("temperature") == 1.0);
        CHECK(j.at("messages").size() == 2);
        CHECK(j.at("messages")[0].at("role") == "system");
        CHECK(j.at("messages")[1].at("role") == "user");
    }
    // The estimation call embeds the stage-1 analysis.
    CHECK(nlohmann::json::parse(requests[1])
              .at("messages")[1]
              .at("content")
              .get<std::string>()
              .find("analysis text") != std::string::npos);
}

TEST_CASE("single-profile panel returns that estimate") {
    testutil::MockChat mock;
    mock.script_content("analysis");
    mock.script_content(estimate_block(0.37));
    const PanelResult panel = run_panel_estimate(
        full_context(), {red_team_profile()}, mock_config(mock));
    CHECK(panel.aggregate == doctest::Approx(0.37));
}

TEST_CASE("identical responses across the panel aggregate exactly") {
    testutil::MockChat mock;
    for (int i = 0; i < 5; ++i) {
        mock.script_content("analysis");
        mock.script_content(estimate_block(0.37));
    }
    const PanelResult panel =
        run_panel_estimate(full_context(), default_profiles(), mock_config(mock));
    CHECK(panel.aggregate == panel.per_profile[0].estimate.final);
}

TEST_CASE("parse failure consumes exactly the retry budget then succeeds") {
    testutil::MockChat mock;
    mock.script_content("analysis");
    mock.script_content("sorry, no numbers today");  // malformed
    mock.script_content(estimate_block(0.5));        // re-ask succeeds
    EndpointConfig cfg = mock_config(mock);
    cfg.parse_retries = 1;
    const PanelResult panel =
        run_panel_estimate(full_context(), {red_team_profile()}, cfg);
    REQUIRE(panel.per_profile.size() == 1);
    CHECK(panel.per_profile[0].ok);
    CHECK(panel.per_profile[0].parse_retries_used == 1);
    CHECK(panel.aggregate == doctest::Approx(0.5));
    CHECK(mock.remaining_script() == 0);
}

TEST_CASE("exhausted parse retries mark the profile failed") {
    testutil::MockChat mock;
    const auto profiles = default_profiles();
    // First profile: both estimate attempts malformed. Remaining four fine.
    mock.script_content("analysis");
    mock.script_content("garbled");
    mock.script_content("still garbled");
    for (int i = 0; i < 4; ++i) {
        mock.script_content("analysis");
        mock.script_content(estimate_block(0.4));
    }
    EndpointConfig cfg = mock_config(mock);
    cfg.parse_retries = 1;
    const PanelResult panel = run_panel_estimate(full_context(), profiles, cfg);
    CHECK(panel.any_failed);
    CHECK_FALSE(panel.per_profile[0].ok);
    CHECK(panel.per_profile[0].parse_retries_used == 1);
    // Aggregate over the four successes only.
    CHECK(panel.aggregate == doctest::Approx(0.4));
}

TEST_CASE("transport failures retry then raise") {
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:9";  // nothing listens there
    cfg.model = "mock";
    cfg.transport_retries = 2;
    cfg.backoff_base_ms = 1;
    CHECK_THROWS_AS((void)run_panel_estimate(full_context(), {red_team_profile()},
                                             cfg),
                    std::runtime_error);
}

TEST_CASE("http 500 responses are retried") {
    testutil::MockChat mock;
    mock.script({500, "{\"error\":\"overloaded\"}", true});
    mock.script_content("analysis");
    mock.script_content(estimate_block(0.3));
    EndpointConfig cfg = mock_config(mock);
    cfg.transport_retries = 2;
    const PanelResult panel =
        run_panel_estimate(full_context(), {red_team_profile()}, cfg);
    CHECK(panel.aggregate == doctest::Approx(0.3));
}

TEST_CASE("audit log records a replayable transcript") {
    const std::string log_path = "audit_test.jsonl";
    std::remove(log_path.c_str());
    {
        testutil::MockChat mock;
        mock.script_content("analysis");
        mock.script_content(estimate_block(0.5));
        EndpointConfig cfg = mock_config(mock);
        cfg.audit_log_path = log_path;
        (void)run_panel_estimate(full_context(), {red_team_profile()}, cfg);
    }
    std::ifstream in(log_path);
    REQUIRE(in.good());
    std::string line;
    int requests = 0, responses = 0;
    std::vector<std::string> contents;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        const std::string event = j.at("event");
        if (event == "request") ++requests;
        if (event == "response") {
            ++responses;
            const auto body = nlohmann::json::parse(j.at("body").get<std::string>());
            contents.push_back(
                body.at("choices")[0].at("message").at("content").get<std::string>());
        }
    }
    CHECK(requests == 2);
    CHECK(responses == 2);
    // Replaying the recorded estimate response reproduces the parse.
    REQUIRE(contents.size() == 2);
    CHECK(parse_estimate_output(contents[1]).final == 0.5);
    std::remove(log_path.c_str());
}

TEST_CASE("panel export produces simulated-expert records") {
    testutil::MockChat mock;
    mock.script_content("analysis");
    mock.script_content(estimate_block(0.37));
    const PanelResult panel = run_panel_estimate(
        full_context(), {red_team_profile()}, mock_config(mock));
    const auto records = panel_to_records(panel, "p_execution", "t3", 2);
    REQUIRE(records.size() == 1);
    CHECK(records[0].expert.kind == ExpertKind::simulated);
    CHECK(records[0].parameter_key == "p_execution");
    CHECK(records[0].capability_level == "t3");
    CHECK(records[0].estimate.mode == doctest::Approx(0.37));
    CHECK(records[0].estimate.low == doctest::Approx(0.27));
}

namespace {

Benchmark small_benchmark(int n) {
    Benchmark b;
    b.id = "bench";
    b.description = "mock benchmark";
    for (int i = 0; i < n; ++i) {
        Task t;
        t.id = "t" + std::to_string(i);
        t.description = "task " + std::to_string(i);
        b.tasks.push_back(t);
    }
    return b;
}

}  // namespace

TEST_CASE("two-task ranking generation") {
    testutil::MockChat mock;
    // Isolated scores for t0, t1; then one easiest pick; then one hardest pick.
    mock.script_content("Difficulty score: 10");
    mock.script_content("Difficulty score: 80");
    mock.script_content("Easiest task: t0");
    mock.script_content("Hardest task: t1");
    const RankingSet set = generate_rankings(small_benchmark(2), mock_config(mock));
    CHECK(set.isolated.ordered_task_ids == std::vector<std::string>{"t0", "t1"});
    CHECK(set.easiest_first.ordered_task_ids ==
          std::vector<std::string>{"t0", "t1"});
    CHECK(set.hardest_first.ordered_task_ids ==
          std::vector<std::string>{"t0", "t1"});
    CHECK(set.isolated_scores.at("t1") == 80.0);
}

TEST_CASE("five-task scripted transcript drives all three rankings") {
    testutil::MockChat mock;
    const double scores[5] = {35, 10, 70, 55, 90};
    for (double s : scores) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "Difficulty score: %.0f", s);
        mock.script_content(buf);
    }
    // Easiest-first elimination picks.
    for (const char* pick : {"t1", "t0", "t3", "t2"}) {
        mock.script_content(std::string("Easiest task: ") + pick);
    }
    // Hardest-first elimination picks.
    for (const char* pick : {"t4", "t2", "t3", "t0"}) {
        mock.script_content(std::string("Hardest task: ") + pick);
    }
    const RankingSet set = generate_rankings(small_benchmark(5), mock_config(mock));
    CHECK(set.isolated.ordered_task_ids ==
          std::vector<std::string>{"t1", "t0", "t3", "t2", "t4"});
    CHECK(set.easiest_first.ordered_task_ids ==
          std::vector<std::string>{"t1", "t0", "t3", "t2", "t4"});
    // Hardest-first picks reversed into easiest-first order.
    CHECK(set.hardest_first.ordered_task_ids ==
          std::vector<std::string>{"t1", "t0", "t3", "t2", "t4"});
    // Every output is a permutation of the task set.
    for (const Ranking* r :
         {&set.isolated, &set.easiest_first, &set.hardest_first}) {
        std::vector<std::string> sorted = r->ordered_task_ids;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::vector<std::string>{"t0", "t1", "t2", "t3", "t4"});
    }
}

TEST_CASE("invalid elimination picks fall back deterministically") {
    testutil::MockChat mock;
    mock.script_content("Difficulty score: 10");
    mock.script_content("Difficulty score: 80");
    mock.script_content("Difficulty score: 40");
    // Easiest-first: first pick invalid twice -> fallback to lowest isolated
    // score (t0); second round picks normally.
    mock.script_content("Easiest task: bogus");
    mock.script_content("Easiest task: also_bogus");
    mock.script_content("Easiest task: t2");
    // Hardest-first behaves.
    mock.script_content("Hardest task: t1");
    mock.script_content("Hardest task: t2");
    const RankingSet set = generate_rankings(small_benchmark(3), mock_config(mock));
    CHECK(set.easiest_first.ordered_task_ids ==
          std::vector<std::string>{"t0", "t2", "t1"});
    CHECK(set.hardest_first.ordered_task_ids ==
          std::vector<std::string>{"t0", "t2", "t1"});
}

TEST_CASE("consistency thresholds") {
    SUBCASE("identical pairs pass with zero distances") {
        const ConsistencyReport r =
            consistency_check({{0.4, 0.4}, {0.7, 0.7}});
        CHECK(r.mean_absolute == 0.0);
        CHECK(r.mean_relative == 0.0);
        CHECK(r.pass);
    }
    SUBCASE("absolute boundary passes") {
        const ConsistencyReport r = consistency_check({{0.50, 0.536}});
        CHECK(r.mean_absolute == doctest::Approx(0.036));
        CHECK(r.pass_absolute);
        CHECK(r.pass);
    }
    SUBCASE("clear miss fails both criteria") {
        const ConsistencyReport r = consistency_check({{0.50, 0.60}});
        CHECK(r.mean_absolute == doctest::Approx(0.10));
        CHECK(r.mean_relative == doctest::Approx(0.20));
        CHECK_FALSE(r.pass_absolute);
        CHECK_FALSE(r.pass_relative);
        CHECK_FALSE(r.pass);
    }
    SUBCASE("empty input is an error") {
        CHECK_THROWS_AS((void)consistency_check({}), std::invalid_argument);
    }
}

TEST_CASE("profile and config files parse") {
    const auto profiles = parse_profiles(R"([
      {"name": "n", "focus": "f", "background": "b", "specificity": "s",
       "trait": "t", "approach": "a"}
    ])");
    CHECK(profiles.size() == 1);
    CHECK_THROWS_AS((void)parse_profiles("[]"), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_profiles(R"([{"name": "", "focus": "f",
      "background": "b", "specificity": "s", "trait": "t", "approach": "a"}])"),
                    std::invalid_argument);

    const EndpointConfig cfg = parse_endpoint_config(R"({
      "base_url": "https://api.example.com/v1", "model": "m",
      "temperature": 0.7, "retries": 5, "rate_limit_per_min": 30
    })");
    CHECK(cfg.base_url == "https://api.example.com/v1");
    CHECK(cfg.temperature == 0.7);
    CHECK(cfg.transport_retries == 5);
    CHECK(cfg.rate_limit_per_min == 30);
    CHECK(cfg.api_key_env == "ESTIMATOR_API_KEY");
}
