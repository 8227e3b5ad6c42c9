#ifndef FETAVAL_CLI_HPP
#define FETAVAL_CLI_HPP

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "engine.hpp"
#include "error.hpp"
#include "manifest.hpp"
#include "ranking.hpp"
#include "report.hpp"
#include "run_io.hpp"
#include "subset.hpp"
#include "synth.hpp"

namespace fetaval {

struct RunConfig {
    std::filesystem::path manifest;
    std::optional<std::filesystem::path> teams;
    std::optional<std::filesystem::path> predictions_root;
    std::filesystem::path run;
    std::filesystem::path output = "fetaval_out";
    unsigned jobs = 1;
    double hd_percentile = 95.0;
    std::string penalty_scope = "per_label";
    double min_penalty = 1.0;
    std::optional<double> fallback_hd95;
    std::optional<double> fallback_bne;
    std::string tie_mode = "shared";
    int connectivity = 26;
    std::size_t bootstrap = 0;
    std::uint64_t seed = 0;
    bool include_both_empty = true;
    bool strict_labels = true;
    bool skip_broken = false;
    bool quiet = false;
    std::vector<std::string> subsets;
    bool all_subsets = false;
    std::vector<std::string> kinds;
    std::optional<double> precision;
    SynthOptions synth;
    std::string synth_error;
    std::string synth_tissue = "WM";
    std::string synth_format = "nii.gz";
    std::vector<double> synth_spacing;
};

namespace detail {

class Logger {
public:
    explicit Logger(std::ostream& err, bool quiet) : err_(err), quiet_(quiet) {}
    void operator()(const std::string& msg) const {
        if (!quiet_) err_ << "fetaval: " << msg << '\n';
    }

private:
    std::ostream& err_;
    bool quiet_;
};

inline unsigned jobs_from_env() {
    const char* v = std::getenv("FETAVAL_JOBS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1 || n > 1024) fail(ErrorKind::usage, "FETAVAL_JOBS must be an integer >= 1");
    return static_cast<unsigned>(n);
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void validate(const RunConfig& c) {
    if (c.jobs < 1) fail(ErrorKind::usage, "--jobs must be >= 1");
    if (!(c.hd_percentile > 0.0 && c.hd_percentile <= 100.0)) fail(ErrorKind::usage, "--hd-percentile must lie in (0, 100]");
    if (!(c.min_penalty > 0.0)) fail(ErrorKind::usage, "--min-penalty must be positive");
    parse_penalty_scope(c.penalty_scope);
    parse_tie_mode(c.tie_mode);
    if (c.connectivity != 6 && c.connectivity != 26) fail(ErrorKind::usage, "--connectivity must be 6 or 26");
}

inline EvaluationConfig evaluation_config(const RunConfig& c) {
    EvaluationConfig cfg;
    cfg.hd_percentile = c.hd_percentile;
    cfg.connectivity = connectivity_from_int(c.connectivity);
    return cfg;
}

inline PenaltyPolicy penalty_policy(const RunConfig& c) {
    PenaltyPolicy p;
    p.hd95_scope = parse_penalty_scope(c.penalty_scope);
    p.min_penalty = c.min_penalty;
    p.fallback_hd95 = c.fallback_hd95;
    p.fallback_bne = c.fallback_bne;
    return p;
}

inline RankingOptions ranking_options(const RunConfig& c) {
    RankingOptions o;
    o.tie_mode = parse_tie_mode(c.tie_mode);
    o.precision = c.precision;
    o.include_both_empty = c.include_both_empty;
    return o;
}

inline std::filesystem::path run_path(const std::filesystem::path& p) {
    if (std::filesystem::is_directory(p)) return p / "run.json";
    return p;
}

inline nlohmann::ordered_json provenance_json(const std::string& command, const RunConfig& c, const EvaluationRun* run) {
    nlohmann::ordered_json j;
    j["tool"] = "fetaval";
    j["tool_version"] = kToolVersion;
    j["command"] = command;
    j["created_utc"] = utc_timestamp();
    if (run) {
        j["config_hash"] = run->provenance.config_hash;
        j["penalty_scope"] = run->provenance.penalty_scope;
        j["hd_percentile"] = run->config.hd_percentile;
        j["connectivity"] = static_cast<int>(run->config.connectivity);
        j["teams"] = run->teams.size();
        j["cases"] = run->cases.size();
    }
    j["tie_mode"] = c.tie_mode;
    j["include_both_empty"] = c.include_both_empty;
    j["jobs"] = c.jobs;
    if (c.bootstrap > 0) {
        j["bootstrap"] = {{"resamples", c.bootstrap}, {"seed", c.seed}, {"generator", kBootstrapGenerator}};
    }
    j["significance_test"] = "wilcoxon_signed_rank (one-sided; exact for n <= 25)";
    return j;
}

/// Subsets covering every metadata value present in the run plus each
/// tissue, as used for the full analysis suite.
inline std::vector<SubsetFilter> all_subsets(const EvaluationRun& run) {
    std::vector<SubsetFilter> out;
    out.emplace_back();
    std::set<Domain> domains;
    std::set<int> qualities;
    std::set<Pathology> pathologies;
    std::set<std::string> srs, institutions;
    for (const auto& c : run.cases) {
        domains.insert(c.domain);
        qualities.insert(c.quality);
        pathologies.insert(c.pathology);
        srs.insert(c.sr_method);
        institutions.insert(c.institution);
    }
    for (Domain d : domains) {
        SubsetFilter f;
        f.domain = d;
        out.push_back(f);
    }
    for (auto it = qualities.rbegin(); it != qualities.rend(); ++it) {
        SubsetFilter f;
        f.quality = *it;
        out.push_back(f);
    }
    for (Pathology p : pathologies) {
        SubsetFilter f;
        f.pathology = p;
        out.push_back(f);
    }
    for (const auto& s : srs) {
        SubsetFilter f;
        f.sr_method = s;
        out.push_back(f);
    }
    for (const auto& i : institutions) {
        SubsetFilter f;
        f.institutions = {i};
        out.push_back(f);
    }
    for (Tissue t : kTissues) {
        SubsetFilter f;
        f.tissues = {t};
        out.push_back(f);
    }
    return out;
}

inline std::size_t selected_cases(const EvaluationRun& run, const SubsetFilter& f) {
    std::size_t n = 0;
    for (const auto& c : run.cases)
        if (f.selects_case(c)) ++n;
    return n;
}

}  // namespace detail

inline int cmd_evaluate(const RunConfig& c, std::ostream& err) {
    detail::validate(c);
    const detail::Logger log(err, c.quiet);
    const Manifest manifest = load_manifest(c.manifest, c.teams, c.predictions_root);
    log("manifest: " + std::to_string(manifest.gt_entries.size()) + " cases, " +
        std::to_string(manifest.team_ids().size()) + " teams");
    if (manifest.team_ids().empty()) fail(ErrorKind::manifest, "manifest lists no team predictions");

    EngineOptions opts;
    opts.jobs = c.jobs;
    opts.skip_broken = c.skip_broken;
    opts.load.strict_labels = c.strict_labels;
    opts.load.warn = [&log](const std::string& m) { log("warning: " + m); };
    opts.progress = log;
    const EvaluationConfig cfg = detail::evaluation_config(c);
    const PenaltyPolicy policy = detail::penalty_policy(c);

    EvaluationRun run = evaluate_manifest(manifest, cfg, policy, opts);
    run.provenance.tool_version = kToolVersion;
    run.provenance.config_hash = config_hash(cfg, policy);
    if (run.cases.size() < manifest.gt_entries.size())
        log("skipped " + std::to_string(manifest.gt_entries.size() - run.cases.size()) + " broken case(s)");

    std::filesystem::create_directories(c.output);
    std::ostringstream csv;
    write_records_csv(csv, run.records);
    write_text_file(c.output / "records.csv", csv.str());
    save_run(c.output / "run.json", run);
    write_text_file(c.output / "provenance.json", detail::provenance_json("evaluate", c, &run).dump(2) + "\n");
    log("wrote " + std::to_string(run.records.size()) + " records to " + (c.output / "records.csv").string());
    return 0;
}

inline int cmd_rank(const RunConfig& c, std::ostream& err) {
    detail::validate(c);
    const detail::Logger log(err, c.quiet);
    const EvaluationRun run = load_run(detail::run_path(c.run));
    const RankingOptions ropts = detail::ranking_options(c);

    std::vector<SubsetFilter> subsets;
    if (c.all_subsets) subsets = detail::all_subsets(run);
    for (const auto& s : c.subsets) subsets.push_back(parse_subset(s));
    if (subsets.empty()) subsets.emplace_back();
    std::vector<RankingKind> kinds;
    for (const auto& k : c.kinds) kinds.push_back(parse_ranking_kind(k));
    if (kinds.empty()) kinds = {RankingKind::global, RankingKind::bne, RankingKind::tir};

    std::filesystem::create_directories(c.output);
    std::set<std::string> written;
    for (const auto& subset : subsets) {
        if (detail::selected_cases(run, subset) == 0)
            fail(ErrorKind::subset, "subset '" + subset.describe() + "' selects no cases");
        for (RankingKind kind : kinds) {
            const std::string stem = ranking_file_stem(to_string(kind), subset);
            if (!written.insert(stem).second) continue;
            const RankingTable table = compute_ranking(kind, run, subset, ropts);
            write_ranking_files(c.output, to_string(kind), subset, table);
            log("wrote " + stem);
            if (c.bootstrap > 0) {
                StabilityOptions so;
                so.resamples = c.bootstrap;
                so.seed = c.seed;
                so.jobs = c.jobs;
                so.policy = detail::penalty_policy(c);
                so.policy.hd95_scope = parse_penalty_scope(run.provenance.penalty_scope);
                so.ranking = ropts;
                const StabilityResult st = bootstrap_stability(run, subset, kind, so);
                write_text_file(c.output / ("stability_" + std::string(to_string(kind)) + "-" + subset.slug() + ".json"),
                                stability_to_json(st).dump(2) + "\n");
            }
        }
    }
    write_text_file(c.output / "rank_provenance.json", detail::provenance_json("rank", c, &run).dump(2) + "\n");
    return 0;
}

inline int cmd_report(const RunConfig& c, std::ostream& err) {
    detail::validate(c);
    const detail::Logger log(err, c.quiet);
    const EvaluationRun run = load_run(detail::run_path(c.run));
    const RankingOptions ropts = detail::ranking_options(c);
    const AggregateOptions agg{c.include_both_empty};
    std::filesystem::create_directories(c.output);

    std::ostringstream csv;
    write_records_csv(csv, run.records);
    write_text_file(c.output / "records.csv", csv.str());

    const SubsetFilter all;
    SubsetFilter in_f, out_f;
    in_f.domain = Domain::in_domain;
    out_f.domain = Domain::out_of_domain;
    const RankingTable global = global_ranking(run, all, ropts);
    std::optional<RankingTable> in_r, out_r;
    if (detail::selected_cases(run, in_f)) in_r = global_ranking(run, in_f, ropts);
    if (detail::selected_cases(run, out_f)) out_r = global_ranking(run, out_f, ropts);
    const RankingTable bne = bne_ranking(run, all, ropts);
    const RankingTable tir = topology_integrative_ranking(run, all, ropts);

    write_ranking_files(c.output, "global", all, global);
    if (in_r) write_ranking_files(c.output, "global", in_f, *in_r);
    if (out_r) write_ranking_files(c.output, "global", out_f, *out_r);
    write_ranking_files(c.output, "bne", all, bne);
    write_ranking_files(c.output, "tir", all, tir);

    const Rendered gt = render_global_table(run, global, in_r ? &*in_r : nullptr, out_r ? &*out_r : nullptr, agg);
    write_text_file(c.output / "table_global.md", gt.markdown);
    write_text_file(c.output / "table_global.csv", gt.csv);
    const Rendered topo = render_topology_table(bne, tir, global);
    write_text_file(c.output / "table_topology.md", topo.markdown);
    write_text_file(c.output / "table_topology.csv", topo.csv);
    const Rendered tissue = render_per_tissue_topology(per_tissue_bne_rankings(run, all, ropts));
    write_text_file(c.output / "table_tissue_topology.md", tissue.markdown);
    write_text_file(c.output / "table_tissue_topology.csv", tissue.csv);

    std::vector<SubsetFilter> summary_subsets{all};
    if (in_r) summary_subsets.push_back(in_f);
    if (out_r) summary_subsets.push_back(out_f);
    write_text_file(c.output / "summary.md", render_summary(run, summary_subsets, agg));
    write_text_file(c.output / "provenance.json", detail::provenance_json("report", c, &run).dump(2) + "\n");
    log("report written to " + c.output.string());
    return 0;
}

inline int cmd_synth(RunConfig c, std::ostream& err) {
    const detail::Logger log(err, c.quiet);
    if (!c.synth_error.empty()) c.synth.error = parse_perturbation(c.synth_error);
    auto t = parse_tissue(c.synth_tissue);
    if (!t || !is_scored(*t)) fail(ErrorKind::usage, "--tissue must name one of the seven tissues");
    c.synth.tissue = *t;
    c.synth.extension = "." + c.synth_format;
    if (!c.synth_spacing.empty()) {
        if (c.synth_spacing.size() == 1) c.synth.spacing = {c.synth_spacing[0], c.synth_spacing[0], c.synth_spacing[0]};
        else if (c.synth_spacing.size() == 3) c.synth.spacing = {c.synth_spacing[0], c.synth_spacing[1], c.synth_spacing[2]};
        else fail(ErrorKind::usage, "--spacing takes one or three values");
    }
    const SynthResult res = synthesize_challenge(c.output, c.synth);
    log("wrote " + std::to_string(res.ground_truths.size()) + " ground truths, " +
        std::to_string(res.predictions.size()) + " predictions and " + res.manifest.string());
    return 0;
}

namespace detail {

inline void add_common(CLI::App* app, RunConfig& c) {
    app->add_option("-o,--output", c.output, "Output directory");
    app->add_flag("-q,--quiet", c.quiet, "Suppress progress messages");
}

inline void add_ranking_flags(CLI::App* app, RunConfig& c) {
    app->add_option("--run", c.run, "run.json or the directory holding it")->required();
    app->add_option("--tie-mode", c.tie_mode, "shared or broken")->check(CLI::IsMember({"shared", "broken"}));
    app->add_option("--include-both-empty", c.include_both_empty,
                    "Count (case, tissue) pairs absent in both masks when averaging");
    app->add_option("--precision", c.precision, "Round aggregates to this step before ranking");
    app->add_option("-j,--jobs", c.jobs, "Worker threads (default: FETAVAL_JOBS or 1)");
}

}  // namespace detail

/// Parses arguments and runs one subcommand. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& err = std::cerr) {
    RunConfig c;
    CLI::App app{"Evaluation and ranking of multi-class fetal brain segmentations", "fetaval"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    try {
        c.jobs = detail::jobs_from_env();
    } catch (const Error& e) {
        err << "fetaval: " << e.what() << '\n';
        return e.exit_code();
    }

    auto* ev = app.add_subcommand("evaluate", "Evaluate every prediction in a manifest");
    ev->add_option("-m,--manifest", c.manifest, "Ground-truth manifest CSV")->required();
    ev->add_option("--teams", c.teams, "Separate team prediction CSV");
    ev->add_option("--predictions-root", c.predictions_root, "Base directory for relative prediction paths");
    ev->add_option("-j,--jobs", c.jobs, "Worker threads (default: FETAVAL_JOBS or 1)");
    ev->add_option("--hd-percentile", c.hd_percentile, "Hausdorff percentile");
    ev->add_option("--penalty-scope", c.penalty_scope, "per_label or global")
        ->check(CLI::IsMember({"per_label", "global"}));
    ev->add_option("--min-penalty", c.min_penalty, "Penalty used when every pooled value is zero");
    ev->add_option("--fallback-hd95", c.fallback_hd95, "HD95 penalty when the pool has no finite value");
    ev->add_option("--fallback-bne", c.fallback_bne, "BNE penalty when the pool has no finite value");
    ev->add_option("--connectivity", c.connectivity, "Foreground connectivity for Betti numbers (26 or 6)");
    ev->add_flag("--strict-labels,!--permissive-labels", c.strict_labels,
                 "Reject labels outside 0..7 (permissive maps them to background)");
    ev->add_flag("--skip-broken", c.skip_broken, "Exclude cases that fail to load instead of aborting");
    detail::add_common(ev, c);

    auto* rk = app.add_subcommand("rank", "Compute rankings from an evaluated run");
    detail::add_ranking_flags(rk, c);
    rk->add_option("--subset", c.subsets, "Subset predicates, e.g. domain=out;quality=3 (repeatable)");
    rk->add_flag("--all-subsets", c.all_subsets, "Rank every domain, quality, pathology, SR, institution and tissue subset");
    rk->add_option("--kind", c.kinds, "global, bne or tir (repeatable; default all)")
        ->check(CLI::IsMember({"global", "bne", "tir"}));
    rk->add_option("--bootstrap", c.bootstrap, "Bootstrap resamples for ranking stability (0 disables)");
    rk->add_option("--seed", c.seed, "Bootstrap seed");
    rk->add_option("--penalty-scope", c.penalty_scope, "Fallback policy details for bootstrap re-penalization")
        ->check(CLI::IsMember({"per_label", "global"}));
    detail::add_common(rk, c);

    auto* rp = app.add_subcommand("report", "Render tables, summary and provenance for a run");
    detail::add_ranking_flags(rp, c);
    detail::add_common(rp, c);

    auto* sy = app.add_subcommand("synth", "Write a synthetic challenge with controlled errors");
    sy->add_option("--teams", c.synth.teams, "Number of teams");
    sy->add_option("--cases", c.synth.cases, "Number of cases");
    sy->add_option("--size", c.synth.size, "Voxels per axis (>= 24)");
    sy->add_option("--spacing", c.synth_spacing, "Voxel spacing in mm (one or three values)")->delimiter(',');
    sy->add_option("--error", c.synth_error, "none, dilate, erode, split, punch-hole or drop-label for every team");
    sy->add_option("--tissue", c.synth_tissue, "Tissue receiving the error");
    sy->add_option("--amount", c.synth.amount, "Strength of the error");
    sy->add_option("--format", c.synth_format, "nii.gz, nii or lv")->check(CLI::IsMember({"nii.gz", "nii", "lv"}));
    detail::add_common(sy, c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, std::cout, err);
        err << "fetaval: usage error: " << e.what() << '\n';
        return 1;
    }

    try {
        if (*ev) return cmd_evaluate(c, err);
        if (*rk) return cmd_rank(c, err);
        if (*rp) return cmd_report(c, err);
        if (*sy) return cmd_synth(c, err);
    } catch (const Error& e) {
        err << "fetaval: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::filesystem::filesystem_error& e) {
        err << "fetaval: io error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "fetaval: internal error: " << e.what() << '\n';
        return 3;
    }
    return 1;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& err = std::cerr) {
    std::vector<const char*> argv{"fetaval"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), err);
}

}  // namespace fetaval

#endif  // FETAVAL_CLI_HPP
