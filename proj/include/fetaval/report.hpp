#ifndef FETAVAL_REPORT_HPP
#define FETAVAL_REPORT_HPP

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "engine.hpp"
#include "error.hpp"
#include "ranking.hpp"
#include "run_io.hpp"

namespace fetaval {

struct Rendered {
    std::string markdown;
    std::string csv;
};

/// "2*" for a shared tie, plain number otherwise.
inline std::string rank_label(const TeamRanking& t, TieMode mode) {
    std::string s = std::to_string(t.final_rank);
    if (t.tied && mode == TieMode::shared) s += '*';
    return s;
}

inline std::string fixed(double v, int decimals) { return format_number(v, decimals, 'f'); }

inline std::string mean_std(const AggregateStat& s) { return fixed(s.mean, 3) + " ± " + fixed(s.std, 2); }

inline nlohmann::ordered_json ranking_to_json(const RankingTable& table, std::string_view kind = {}) {
    nlohmann::ordered_json j;
    if (!kind.empty()) j["kind"] = kind;
    j["subset"] = table.subset;
    j["tie_mode"] = to_string(table.tie_mode);
    j["constituents"] = table.constituents;
    j["teams"] = nlohmann::ordered_json::array();
    for (const auto& t : table.teams) {
        nlohmann::ordered_json tj;
        tj["team_id"] = t.team_id;
        nlohmann::ordered_json values = nlohmann::ordered_json::object(), ranks = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < table.constituents.size(); ++i) {
            values[table.constituents[i]] = t.metric_values[i];
            ranks[table.constituents[i]] = t.metric_ranks[i];
        }
        tj["metric_values"] = values;
        tj["metric_ranks"] = ranks;
        tj["combined_score"] = t.combined_score;
        tj["final_rank"] = t.final_rank;
        tj["tied"] = t.tied;
        if (!t.tie_break.empty()) tj["tie_break"] = t.tie_break;
        j["teams"].push_back(tj);
    }
    return j;
}

inline std::string ranking_to_csv(const RankingTable& table) {
    std::ostringstream out;
    out << "rank,team_id";
    for (const auto& c : table.constituents) out << ',' << c << "_value," << c << "_rank";
    out << ",combined_score,tied\n";
    for (const auto& t : table.teams) {
        out << rank_label(t, table.tie_mode) << ',' << csv::escape(t.team_id);
        for (std::size_t i = 0; i < table.constituents.size(); ++i)
            out << ',' << format_number(t.metric_values[i], 6) << ',' << t.metric_ranks[i];
        out << ',' << t.combined_score << ',' << (t.tied ? "true" : "false") << '\n';
    }
    return out.str();
}

inline std::string ranking_to_markdown(const RankingTable& table, std::string_view title = {}) {
    std::ostringstream out;
    if (!title.empty()) out << "## " << title << "\n\n";
    out << "Subset: `" << table.subset << "`, tie mode: " << to_string(table.tie_mode) << "\n\n";
    out << "| Rank | Team |";
    for (const auto& c : table.constituents) out << ' ' << c << " |";
    out << " Rank sum |\n|---:|---|";
    for (std::size_t i = 0; i < table.constituents.size(); ++i) out << "---:|";
    out << "---:|\n";
    std::vector<std::string> breaks;
    for (const auto& t : table.teams) {
        out << "| " << rank_label(t, table.tie_mode) << " | " << t.team_id << " |";
        for (std::size_t i = 0; i < table.constituents.size(); ++i)
            out << ' ' << format_number(t.metric_values[i], 4) << " (" << t.metric_ranks[i] << ") |";
        out << ' ' << t.combined_score << " |\n";
        if (!t.tie_break.empty()) breaks.push_back(t.team_id + " (" + t.tie_break + ")");
    }
    if (table.tie_mode == TieMode::shared && std::any_of(table.teams.begin(), table.teams.end(),
                                                          [](const TeamRanking& t) { return t.tied; }))
        out << "\n\\* tied\n";
    if (!breaks.empty()) {
        out << "\nTies broken:";
        for (const auto& b : breaks) out << ' ' << b;
        out << '\n';
    }
    return out.str();
}

inline std::string ranking_file_stem(std::string_view kind, const std::string& subset_slug) {
    return "ranking_" + std::string(kind) + "-" + subset_slug;
}

inline std::string ranking_file_stem(std::string_view kind, const SubsetFilter& subset) {
    return ranking_file_stem(kind, subset.slug());
}

/// Writes <stem>.json/.csv/.md under `dir` and returns the stem.
inline std::string write_ranking_files(const std::filesystem::path& dir, std::string_view kind, const SubsetFilter& subset,
                                       const RankingTable& table) {
    const std::string stem = ranking_file_stem(kind, subset);
    write_text_file(dir / (stem + ".json"), ranking_to_json(table, kind).dump(2) + "\n");
    write_text_file(dir / (stem + ".csv"), ranking_to_csv(table));
    write_text_file(dir / (stem + ".md"),
                    ranking_to_markdown(table, std::string(kind) + " ranking (" + table.subset + ")"));
    return stem;
}

namespace detail {

inline void require_same_teams(const RankingTable& a, const RankingTable& b, const char* what) {
    if (a.team_set() != b.team_set()) fail(ErrorKind::report, std::string(what) + " ranking covers a different team set");
}

}  // namespace detail

/// One row per team ordered by global rank: rank, mean ± std of DSC, HD95
/// and VS, in-domain rank and out-of-domain rank ("-" when absent).
inline Rendered render_global_table(const EvaluationRun& run, const RankingTable& global,
                                    const RankingTable* in_domain, const RankingTable* out_domain,
                                    const AggregateOptions& agg = {}) {
    if (in_domain) detail::require_same_teams(global, *in_domain, "in-domain");
    if (out_domain) detail::require_same_teams(global, *out_domain, "out-of-domain");
    const SubsetFilter all;
    const auto dsc = aggregate(run, all, Metric::dsc, agg);
    const auto hd = aggregate(run, all, Metric::hd95, agg);
    const auto vs = aggregate(run, all, Metric::vs, agg);
    std::set<std::string> run_teams;
    for (const auto& [t, s] : dsc) run_teams.insert(t);
    if (run_teams != global.team_set()) fail(ErrorKind::report, "global ranking and run cover different teams");

    auto sub_rank = [](const RankingTable* r, const std::string& team) {
        return r ? rank_label(r->at(team), r->tie_mode) : std::string("-");
    };
    Rendered out;
    std::ostringstream md, csv;
    md << "| Rank | Team | DSC | HD95 | VS | In-domain rank | Out-of-domain rank |\n"
       << "|---:|---|---|---|---|---:|---:|\n";
    csv << "rank,team_id,dsc_mean,dsc_std,hd95_mean,hd95_std,vs_mean,vs_std,in_domain_rank,out_of_domain_rank\n";
    bool any_tie = false;
    for (const auto& t : global.teams) {
        const std::string rank = rank_label(t, global.tie_mode);
        any_tie = any_tie || rank.back() == '*';
        const auto& d = dsc.at(t.team_id);
        const auto& h = hd.at(t.team_id);
        const auto& v = vs.at(t.team_id);
        md << "| " << rank << " | " << t.team_id << " | " << mean_std(d) << " | " << mean_std(h) << " | " << mean_std(v)
           << " | " << sub_rank(in_domain, t.team_id) << " | " << sub_rank(out_domain, t.team_id) << " |\n";
        csv << rank << ',' << csv::escape(t.team_id) << ',' << fixed(d.mean, 3) << ',' << fixed(d.std, 2) << ','
            << fixed(h.mean, 3) << ',' << fixed(h.std, 2) << ',' << fixed(v.mean, 3) << ',' << fixed(v.std, 2) << ','
            << sub_rank(in_domain, t.team_id) << ',' << sub_rank(out_domain, t.team_id) << '\n';
        if (in_domain && sub_rank(in_domain, t.team_id).back() == '*') any_tie = true;
        if (out_domain && sub_rank(out_domain, t.team_id).back() == '*') any_tie = true;
    }
    if (any_tie) md << "\n\\* tied\n";
    out.markdown = md.str();
    out.csv = csv.str();
    return out;
}

/// BNE_k ranks, overall BNE rank, TIR rank and global rank per team,
/// ordered by BNE rank.
inline Rendered render_topology_table(const RankingTable& bne, const RankingTable& tir, const RankingTable& global) {
    detail::require_same_teams(bne, tir, "TIR");
    detail::require_same_teams(bne, global, "global");
    if (bne.constituents.size() != 3) fail(ErrorKind::report, "BNE ranking must have three constituents");
    std::ostringstream md, csv;
    md << "| Team | BNE0 | BNE1 | BNE2 | BNE | TIR | Global |\n|---|---:|---:|---:|---:|---:|---:|\n";
    csv << "team_id,bne0_rank,bne1_rank,bne2_rank,bne_rank,tir_rank,global_rank\n";
    for (const auto& t : bne.teams) {
        const std::string b = rank_label(t, bne.tie_mode);
        const std::string r = rank_label(tir.at(t.team_id), tir.tie_mode);
        const std::string g = rank_label(global.at(t.team_id), global.tie_mode);
        md << "| " << t.team_id << " | " << t.metric_ranks[0] << " | " << t.metric_ranks[1] << " | " << t.metric_ranks[2]
           << " | " << b << " | " << r << " | " << g << " |\n";
        csv << csv::escape(t.team_id) << ',' << t.metric_ranks[0] << ',' << t.metric_ranks[1] << ',' << t.metric_ranks[2]
            << ',' << b << ',' << r << ',' << g << '\n';
    }
    return {md.str(), csv.str()};
}

/// Seven per-tissue rank columns plus their mean (one decimal), ordered by
/// mean then team_id.
inline Rendered render_per_tissue_topology(const std::map<Tissue, RankingTable>& per_tissue) {
    for (Tissue t : kTissues)
        if (!per_tissue.count(t)) fail(ErrorKind::report, "missing per-tissue ranking for " + std::string(name(t)));
    const RankingTable& first = per_tissue.at(kTissues.front());
    for (Tissue t : kTissues) detail::require_same_teams(first, per_tissue.at(t), name(t).data());

    struct Row {
        std::string team;
        std::vector<int> ranks;
        double mean;
    };
    std::vector<Row> rows;
    for (const auto& team : first.team_set()) {
        Row r{team, {}, 0.0};
        int sum = 0;
        for (Tissue t : kTissues) {
            const int k = per_tissue.at(t).at(team).final_rank;
            r.ranks.push_back(k);
            sum += k;
        }
        r.mean = static_cast<double>(sum) / static_cast<double>(kTissues.size());
        rows.push_back(std::move(r));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.mean < b.mean; });
    std::ostringstream md, csv;
    md << "| Team |";
    csv << "team_id";
    for (Tissue t : kTissues) {
        md << ' ' << name(t) << " |";
        csv << ',' << name(t);
    }
    md << " Mean |\n|---|";
    csv << ",mean\n";
    for (std::size_t i = 0; i <= kTissues.size(); ++i) md << "---:|";
    md << '\n';
    for (const auto& r : rows) {
        md << "| " << r.team << " |";
        csv << csv::escape(r.team);
        for (int k : r.ranks) {
            md << ' ' << k << " |";
            csv << ',' << k;
        }
        md << ' ' << fixed(r.mean, 1) << " |\n";
        csv << ',' << fixed(r.mean, 1) << '\n';
    }
    return {md.str(), csv.str()};
}

inline std::map<Tissue, RankingTable> per_tissue_bne_rankings(const EvaluationRun& run, const SubsetFilter& base,
                                                              const RankingOptions& opts = {}) {
    std::map<Tissue, RankingTable> out;
    for (Tissue t : kTissues) {
        SubsetFilter f = base;
        f.tissues = {t};
        out.emplace(t, bne_ranking(run, f, opts));
    }
    return out;
}

/// Per-tissue mean ± std of DSC, HD95 and VS for each team, one block per
/// subset.
inline std::string render_summary(const EvaluationRun& run, const std::vector<SubsetFilter>& subsets,
                                  const AggregateOptions& agg = {}) {
    std::ostringstream md;
    md << "# Evaluation summary\n\n"
       << "Teams: " << run.teams.size() << ", cases: " << run.cases.size() << ", records: " << run.records.size()
       << "\n\nHD95 penalty scope: " << run.provenance.penalty_scope << "\n";
    for (const auto& subset : subsets) {
        bool header_done = false;
        for (Metric m : {Metric::dsc, Metric::hd95, Metric::vs}) {
            std::map<Tissue, std::map<std::string, AggregateStat>> cols;
            for (Tissue t : kTissues) {
                SubsetFilter f = subset;
                if (!f.selects_tissue(t)) continue;
                f.tissues = {t};
                try {
                    cols[t] = aggregate(run, f, m, agg);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::subset) throw;
                }
            }
            if (cols.empty()) continue;
            if (!header_done) {
                md << "\n## Subset `" << subset.describe() << "`\n";
                header_done = true;
            }
            md << "\n### " << to_string(m) << "\n\n| Team |";
            for (const auto& [t, s] : cols) md << ' ' << name(t) << " |";
            md << "\n|---|";
            for (std::size_t i = 0; i < cols.size(); ++i) md << "---|";
            md << '\n';
            for (const auto& team : run.teams) {
                md << "| " << team << " |";
                for (const auto& [t, s] : cols) {
                    auto it = s.find(team);
                    md << ' ' << (it == s.end() ? std::string("-") : mean_std(it->second)) << " |";
                }
                md << '\n';
            }
        }
        if (!header_done) md << "\n## Subset `" << subset.describe() << "`\n\nNo records selected.\n";
    }
    return md.str();
}

inline nlohmann::ordered_json stability_to_json(const StabilityResult& s) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(s.kind);
    j["subset"] = s.subset;
    j["resamples"] = s.resamples;
    j["seed"] = s.seed;
    j["generator"] = s.generator;
    j["teams"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < s.teams.size(); ++i) {
        nlohmann::ordered_json t;
        t["team_id"] = s.teams[i];
        t["full_rank"] = s.full.at(s.teams[i]).final_rank;
        t["rank_frequency"] = s.frequency[i];
        j["teams"].push_back(t);
    }
    j["kendall_tau"] = s.kendall_tau;
    double mean = 0.0;
    for (double v : s.kendall_tau) mean += v;
    if (!s.kendall_tau.empty()) mean /= static_cast<double>(s.kendall_tau.size());
    j["kendall_tau_mean"] = mean;
    return j;
}

}  // namespace fetaval

#endif  // FETAVAL_REPORT_HPP
