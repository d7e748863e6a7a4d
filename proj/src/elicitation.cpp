#include "riskquant/elicitation.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "riskquant/stats.hpp"

#include "json.hpp"

using nlohmann::json;

namespace riskquant {

namespace {

ExpertKind expert_kind_from_string(const std::string& s) {
    if (s == "human") return ExpertKind::human;
    if (s == "simulated") return ExpertKind::simulated;
    throw std::invalid_argument("unknown expert kind '" + s + "'");
}

std::string expert_kind_to_string(ExpertKind k) {
    return k == ExpertKind::human ? "human" : "simulated";
}

void check_unique(const std::vector<EstimateRecord>& records) {
    std::set<std::tuple<std::string, std::string, std::string, int>> seen;
    for (const auto& r : records) {
        if (!seen.emplace(r.expert.id, r.parameter_key, r.capability_level, r.round)
                 .second) {
            throw std::invalid_argument(
                "duplicate estimate record for expert '" + r.expert.id +
                "', parameter '" + r.parameter_key + "', level '" +
                r.capability_level + "', round " + std::to_string(r.round));
        }
    }
}

EstimateRecord record_from_fields(const std::string& expert, const std::string& kind,
                                  const std::string& parameter_key,
                                  const std::string& capability_level, int round,
                                  double low, double mode, double high,
                                  double confidence, const std::string& estimate_kind,
                                  const std::string& rationale) {
    EstimateRecord rec;
    rec.expert = {expert, expert, expert_kind_from_string(kind)};
    rec.parameter_key = parameter_key;
    rec.capability_level = capability_level;
    rec.round = round;
    rec.estimate = {low, mode, high, confidence,
                    estimate_kind_from_string(estimate_kind)};
    rec.rationale = rationale;
    if (round != 1 && round != 2) {
        throw std::invalid_argument("record round must be 1 or 2");
    }
    if (rec.parameter_key.empty()) {
        throw std::invalid_argument("record parameter_key must be nonempty");
    }
    check_estimate(rec.estimate);
    return rec;
}

}  // namespace

std::vector<EstimateRecord> parse_records(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("estimate file syntax error: ") +
                                    e.what());
    }
    if (!root.is_array()) {
        throw std::invalid_argument("estimate file must be a JSON array of records");
    }
    const std::set<std::string> allowed = {
        "expert", "kind",       "parameter_key", "capability_level", "round",
        "low",    "mode",       "high",          "confidence",       "estimate_kind",
        "rationale"};
    std::vector<EstimateRecord> records;
    for (const auto& jr : root) {
        if (!jr.is_object()) {
            throw std::invalid_argument("estimate records must be objects");
        }
        for (const auto& [key, value] : jr.items()) {
            (void)value;
            if (!allowed.contains(key)) {
                throw std::invalid_argument("unknown key '" + key +
                                            "' in estimate record");
            }
        }
        std::string level;
        if (jr.contains("capability_level") && !jr.at("capability_level").is_null()) {
            level = jr.at("capability_level").get<std::string>();
        }
        records.push_back(record_from_fields(
            jr.at("expert").get<std::string>(), jr.at("kind").get<std::string>(),
            jr.at("parameter_key").get<std::string>(), level,
            jr.at("round").get<int>(), jr.at("low").get<double>(),
            jr.at("mode").get<double>(), jr.at("high").get<double>(),
            jr.at("confidence").get<double>(),
            jr.at("estimate_kind").get<std::string>(),
            jr.contains("rationale") ? jr.at("rationale").get<std::string>() : ""));
    }
    check_unique(records);
    return records;
}

namespace {

// Minimal RFC-4180 CSV: quoted fields may contain commas, quotes double up.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(field));
            field.clear();
            if (row.size() > 1 || !row[0].empty()) rows.push_back(std::move(row));
            row.clear();
        } else {
            field += c;
        }
    }
    if (!field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::vector<EstimateRecord> parse_records_csv(const std::string& text) {
    const auto rows = parse_csv(text);
    if (rows.empty()) {
        throw std::invalid_argument("CSV estimate file is empty");
    }
    const std::vector<std::string> expected = {
        "expert", "kind",       "parameter_key", "capability_level", "round",
        "low",    "mode",       "high",          "confidence",       "estimate_kind",
        "rationale"};
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
        col[rows[0][i]] = i;
    }
    for (const auto& name : expected) {
        if (!col.contains(name)) {
            throw std::invalid_argument("CSV estimate file missing column '" + name +
                                        "'");
        }
    }
    std::vector<EstimateRecord> records;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() < expected.size()) {
            throw std::invalid_argument("CSV row " + std::to_string(r + 1) +
                                        " has too few fields");
        }
        auto cell = [&](const std::string& name) { return row[col.at(name)]; };
        records.push_back(record_from_fields(
            cell("expert"), cell("kind"), cell("parameter_key"),
            cell("capability_level"), std::stoi(cell("round")),
            std::stod(cell("low")), std::stod(cell("mode")), std::stod(cell("high")),
            std::stod(cell("confidence")), cell("estimate_kind"), cell("rationale")));
    }
    check_unique(records);
    return records;
}

std::vector<EstimateRecord> load_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open estimate file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
        return parse_records_csv(buf.str());
    }
    return parse_records(buf.str());
}

std::string records_to_json(const std::vector<EstimateRecord>& records) {
    json out = json::array();
    for (const auto& r : records) {
        json jr;
        jr["expert"] = r.expert.id;
        jr["kind"] = expert_kind_to_string(r.expert.kind);
        jr["parameter_key"] = r.parameter_key;
        if (r.capability_level.empty()) {
            jr["capability_level"] = nullptr;
        } else {
            jr["capability_level"] = r.capability_level;
        }
        jr["round"] = r.round;
        jr["low"] = r.estimate.low;
        jr["mode"] = r.estimate.mode;
        jr["high"] = r.estimate.high;
        jr["confidence"] = r.estimate.confidence;
        jr["estimate_kind"] = to_string(r.estimate.kind);
        jr["rationale"] = r.rationale;
        out.push_back(std::move(jr));
    }
    return out.dump(2) + "\n";
}

namespace {

using GroupKey = std::pair<std::string, std::string>;  // (parameter, level)

std::map<GroupKey, std::vector<const EstimateRecord*>> group_records(
    const std::vector<EstimateRecord>& records) {
    std::map<GroupKey, std::vector<const EstimateRecord*>> groups;
    for (const auto& r : records) {
        groups[{r.parameter_key, r.capability_level}].push_back(&r);
    }
    for (auto& [key, rows] : groups) {
        (void)key;
        std::sort(rows.begin(), rows.end(),
                  [](const EstimateRecord* a, const EstimateRecord* b) {
                      return a->expert.id < b->expert.id;
                  });
    }
    return groups;
}

}  // namespace

std::vector<ParameterSummary> summarize_round(
    const std::vector<EstimateRecord>& records, int round) {
    for (const auto& r : records) {
        if (r.round != round) {
            throw std::invalid_argument("summary requested for round " +
                                        std::to_string(round) + " but record for '" +
                                        r.parameter_key + "' has round " +
                                        std::to_string(r.round));
        }
    }
    if (records.empty()) {
        throw std::invalid_argument("no records to summarize");
    }
    std::vector<ParameterSummary> out;
    for (const auto& [key, rows] : group_records(records)) {
        ParameterSummary s;
        s.parameter_key = key.first;
        s.capability_level = key.second;
        std::vector<double> modes;
        s.min_low = rows.front()->estimate.low;
        s.max_high = rows.front()->estimate.high;
        for (const EstimateRecord* r : rows) {
            modes.push_back(r->estimate.mode);
            s.min_low = std::min(s.min_low, r->estimate.low);
            s.max_high = std::max(s.max_high, r->estimate.high);
            s.rows.push_back(*r);
        }
        s.median_mode = stats::median(std::move(modes));
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<DisagreementEntry> disagreement_ranking(
    const std::vector<EstimateRecord>& records) {
    std::vector<DisagreementEntry> entries;
    for (const auto& [key, rows] : group_records(records)) {
        if (rows.size() < 2) {
            throw std::invalid_argument("disagreement ranking needs >= 2 experts for '" +
                                        key.first + "'");
        }
        std::vector<double> modes;
        for (const EstimateRecord* r : rows) modes.push_back(r->estimate.mode);
        std::sort(modes.begin(), modes.end());
        DisagreementEntry e;
        e.parameter_key = key.first;
        e.capability_level = key.second;
        e.iqr = stats::quantile_sorted(modes, 0.75) - stats::quantile_sorted(modes, 0.25);
        e.median_mode = stats::quantile_sorted(modes, 0.5);
        if (e.median_mode == 0.0) {
            e.score = e.iqr;
            e.zero_median = true;
        } else {
            e.score = e.iqr / e.median_mode;
        }
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(),
              [](const DisagreementEntry& a, const DisagreementEntry& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (std::abs(a.iqr) != std::abs(b.iqr)) {
                      return std::abs(a.iqr) > std::abs(b.iqr);
                  }
                  return std::tie(a.parameter_key, a.capability_level) <
                         std::tie(b.parameter_key, b.capability_level);
              });
    return entries;
}

const FittedDistribution& ExpertMixture::resolve(
    const std::string& expert_id, const std::string& parameter_key) const {
    const auto eit = components.find(expert_id);
    if (eit == components.end()) {
        throw std::runtime_error("mixture has no expert '" + expert_id + "'");
    }
    const auto pit = eit->second.find(parameter_key);
    if (pit == eit->second.end()) {
        throw std::runtime_error("mixture coverage gap: expert '" + expert_id +
                                 "' has no parameter '" + parameter_key + "'");
    }
    if (!active_level.empty()) {
        const auto lit = pit->second.find(active_level);
        if (lit != pit->second.end()) return lit->second;
    }
    const auto lit = pit->second.find("");
    if (lit == pit->second.end()) {
        throw std::runtime_error("mixture coverage gap: expert '" + expert_id +
                                 "', parameter '" + parameter_key +
                                 "' has no baseline entry");
    }
    return lit->second;
}

ExpertMixture build_mixture(const std::vector<EstimateRecord>& records) {
    if (records.empty()) {
        throw std::invalid_argument("cannot build a mixture from zero records");
    }
    std::map<std::string, ExpertId> experts;
    std::set<GroupKey> pairs;
    for (const auto& r : records) {
        if (r.round != 2) {
            throw std::invalid_argument("mixture takes round-2 records only (expert '" +
                                        r.expert.id + "', parameter '" +
                                        r.parameter_key + "' is round " +
                                        std::to_string(r.round) + ")");
        }
        experts.emplace(r.expert.id, r.expert);
        pairs.insert({r.parameter_key, r.capability_level});
    }

    ExpertMixture mixture;
    for (const auto& [id, expert] : experts) {
        (void)id;
        mixture.experts.push_back(expert);
    }

    std::map<std::string, std::set<GroupKey>> covered;
    for (const auto& r : records) {
        covered[r.expert.id].insert({r.parameter_key, r.capability_level});
    }
    std::string gaps;
    for (const auto& [eid, expert] : experts) {
        (void)expert;
        for (const auto& pair : pairs) {
            if (!covered[eid].contains(pair)) {
                gaps += "\n  expert '" + eid + "' missing parameter '" + pair.first +
                        "'" +
                        (pair.second.empty() ? "" : " at level '" + pair.second + "'");
            }
        }
    }
    if (!gaps.empty()) {
        throw std::runtime_error("mixture coverage gaps:" + gaps);
    }

    for (const auto& r : records) {
        try {
            mixture.components[r.expert.id][r.parameter_key][r.capability_level] =
                fit_estimate(r.estimate);
        } catch (const std::exception& e) {
            throw std::runtime_error("fit failed for expert '" + r.expert.id +
                                     "', parameter '" + r.parameter_key +
                                     "': " + e.what());
        }
    }
    return mixture;
}

nlohmann::json mixture_to_json(const ExpertMixture& mixture) {
    json j;
    j["active_level"] =
        mixture.active_level.empty() ? "baseline" : mixture.active_level;
    json experts = json::array();
    for (const ExpertId& e : mixture.experts) {
        experts.push_back({{"id", e.id},
                           {"display_name", e.display_name},
                           {"kind", expert_kind_to_string(e.kind)}});
    }
    j["experts"] = std::move(experts);
    json components;
    for (const auto& [expert, params] : mixture.components) {
        json jp;
        for (const auto& [param, levels] : params) {
            json jl;
            for (const auto& [level, dist] : levels) {
                jl[level.empty() ? "baseline" : level] = dist_to_json(dist);
            }
            jp[param] = std::move(jl);
        }
        components[expert] = std::move(jp);
    }
    j["components"] = std::move(components);
    return j;
}

ExpertMixture mixture_from_json(const nlohmann::json& j) {
    ExpertMixture mixture;
    const std::string active = j.at("active_level").get<std::string>();
    mixture.active_level = active == "baseline" ? "" : active;
    for (const auto& je : j.at("experts")) {
        mixture.experts.push_back(
            {je.at("id").get<std::string>(),
             je.contains("display_name") ? je.at("display_name").get<std::string>()
                                         : je.at("id").get<std::string>(),
             expert_kind_from_string(je.at("kind").get<std::string>())});
    }
    std::sort(mixture.experts.begin(), mixture.experts.end(),
              [](const ExpertId& a, const ExpertId& b) { return a.id < b.id; });
    for (const auto& [expert, params] : j.at("components").items()) {
        for (const auto& [param, levels] : params.items()) {
            for (const auto& [level, dist] : levels.items()) {
                mixture.components[expert][param][level == "baseline" ? "" : level] =
                    dist_from_json(dist);
            }
        }
    }
    return mixture;
}

}  // namespace riskquant
