#ifndef FETAVAL_RANKING_HPP
#define FETAVAL_RANKING_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "engine.hpp"
#include "error.hpp"
#include "subset.hpp"

namespace fetaval {

enum class Direction { higher_better, lower_better };

enum class TieMode { shared, broken };

inline const char* to_string(TieMode m) { return m == TieMode::shared ? "shared" : "broken"; }

inline TieMode parse_tie_mode(std::string_view s) {
    if (s == "shared") return TieMode::shared;
    if (s == "broken") return TieMode::broken;
    fail(ErrorKind::usage, "tie mode must be shared or broken");
}

using RankMap = std::map<std::string, int>;
using ValueMap = std::map<std::string, double>;

/// Competition ranks (1, 2, 2, 4). With `precision`, values are rounded to
/// that step before comparison.
inline RankMap rank_by_metric(const ValueMap& values, Direction dir, std::optional<double> precision = std::nullopt) {
    if (values.empty()) fail(ErrorKind::ranking, "cannot rank an empty team set");
    if (precision && !(*precision > 0.0)) fail(ErrorKind::usage, "comparison precision must be positive");
    std::vector<std::pair<double, std::string>> keyed;
    for (const auto& [team, v] : values) {
        if (!std::isfinite(v)) fail(ErrorKind::ranking, "non-finite aggregate for team '" + team + "'");
        double k = precision ? std::round(v / *precision) : v;
        keyed.emplace_back(dir == Direction::higher_better ? -k : k, team);
    }
    std::sort(keyed.begin(), keyed.end());
    RankMap out;
    for (std::size_t i = 0; i < keyed.size(); ++i) {
        const int rank = (i > 0 && keyed[i].first == keyed[i - 1].first) ? out[keyed[i - 1].second]
                                                                          : static_cast<int>(i + 1);
        out[keyed[i].second] = rank;
    }
    return out;
}

/// One input column of a combined ranking.
struct Constituent {
    std::string name;
    RankMap ranks;
    ValueMap values;
};

struct TeamRanking {
    std::string team_id;
    std::vector<double> metric_values;  // aligned with RankingTable::constituents
    std::vector<int> metric_ranks;
    int combined_score = 0;
    int final_rank = 0;
    /// Another team has the same combined score.
    bool tied = false;
    /// Set in broken mode when the final rank came from a tiebreak.
    std::string tie_break;
};

struct RankingTable {
    std::string subset = "all";
    TieMode tie_mode = TieMode::shared;
    std::vector<std::string> constituents;
    std::vector<TeamRanking> teams;  // by final rank, then team_id

    const TeamRanking* find(std::string_view team) const {
        for (const auto& t : teams)
            if (t.team_id == team) return &t;
        return nullptr;
    }
    const TeamRanking& at(std::string_view team) const {
        if (const auto* t = find(team)) return *t;
        fail(ErrorKind::ranking, "team '" + std::string(team) + "' is not in the ranking");
    }
    RankMap final_ranks() const {
        RankMap out;
        for (const auto& t : teams) out[t.team_id] = t.final_rank;
        return out;
    }
    std::set<std::string> team_set() const {
        std::set<std::string> out;
        for (const auto& t : teams) out.insert(t.team_id);
        return out;
    }
};

/// Sum of constituent ranks, ranked ascending. `broken` orders equal sums
/// by mean constituent rank, then team_id.
inline RankingTable combine_rankings(const std::vector<Constituent>& parts, TieMode mode = TieMode::shared,
                                     std::string subset = "all") {
    if (parts.empty()) fail(ErrorKind::ranking, "no rankings to combine");
    std::set<std::string> teams;
    for (const auto& [t, r] : parts.front().ranks) teams.insert(t);
    if (teams.empty()) fail(ErrorKind::ranking, "cannot rank an empty team set");
    for (const auto& p : parts) {
        std::set<std::string> s;
        for (const auto& [t, r] : p.ranks) s.insert(t);
        if (s != teams) fail(ErrorKind::ranking, "constituent '" + p.name + "' covers a different team set");
        for (const auto& [t, v] : p.values)
            if (!teams.count(t)) fail(ErrorKind::ranking, "constituent '" + p.name + "' has a value for unknown team '" + t + "'");
    }
    RankingTable table;
    table.subset = std::move(subset);
    table.tie_mode = mode;
    for (const auto& p : parts) table.constituents.push_back(p.name);
    for (const auto& team : teams) {
        TeamRanking tr;
        tr.team_id = team;
        for (const auto& p : parts) {
            const int r = p.ranks.at(team);
            tr.metric_ranks.push_back(r);
            auto v = p.values.find(team);
            tr.metric_values.push_back(v == p.values.end() ? static_cast<double>(r) : v->second);
            tr.combined_score += r;
        }
        table.teams.push_back(std::move(tr));
    }
    const double n = static_cast<double>(parts.size());
    auto mean_rank = [n](const TeamRanking& t) { return static_cast<double>(t.combined_score) / n; };
    std::sort(table.teams.begin(), table.teams.end(), [&](const TeamRanking& a, const TeamRanking& b) {
        if (a.combined_score != b.combined_score) return a.combined_score < b.combined_score;
        if (mode == TieMode::broken && mean_rank(a) != mean_rank(b)) return mean_rank(a) < mean_rank(b);
        return a.team_id < b.team_id;
    });
    auto& ts = table.teams;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const bool same_prev = i > 0 && ts[i].combined_score == ts[i - 1].combined_score;
        const bool same_next = i + 1 < ts.size() && ts[i].combined_score == ts[i + 1].combined_score;
        ts[i].tied = same_prev || same_next;
        if (mode == TieMode::shared) {
            ts[i].final_rank = same_prev ? ts[i - 1].final_rank : static_cast<int>(i + 1);
        } else {
            ts[i].final_rank = static_cast<int>(i + 1);
            if (ts[i].tied) {
                bool by_mean = (same_prev && mean_rank(ts[i]) != mean_rank(ts[i - 1])) ||
                               (same_next && mean_rank(ts[i]) != mean_rank(ts[i + 1]));
                ts[i].tie_break = by_mean ? "mean_rank" : "team_id";
            }
        }
    }
    return table;
}

struct RankingOptions {
    TieMode tie_mode = TieMode::shared;
    std::optional<double> precision;
    bool include_both_empty = true;
};

inline Direction direction_of(Metric m) {
    return higher_is_better(m) ? Direction::higher_better : Direction::lower_better;
}

inline Constituent metric_constituent(const EvaluationRun& run, const SubsetFilter& subset, Metric m,
                                      const RankingOptions& opts = {}) {
    Constituent c;
    c.name = to_string(m);
    for (const auto& [team, stat] : aggregate(run, subset, m, AggregateOptions{opts.include_both_empty}))
        c.values[team] = stat.mean;
    c.ranks = rank_by_metric(c.values, direction_of(m), opts.precision);
    return c;
}

inline RankingTable metric_ranking(const EvaluationRun& run, const SubsetFilter& subset,
                                   const std::vector<Metric>& metrics, const RankingOptions& opts = {}) {
    std::vector<Constituent> parts;
    for (Metric m : metrics) parts.push_back(metric_constituent(run, subset, m, opts));
    return combine_rankings(parts, opts.tie_mode, subset.describe());
}

inline RankingTable global_ranking(const EvaluationRun& run, const SubsetFilter& subset = {},
                                   const RankingOptions& opts = {}) {
    return metric_ranking(run, subset, {Metric::dsc, Metric::hd95, Metric::vs}, opts);
}

inline RankingTable bne_ranking(const EvaluationRun& run, const SubsetFilter& subset = {},
                                const RankingOptions& opts = {}) {
    return metric_ranking(run, subset, {Metric::bne0, Metric::bne1, Metric::bne2}, opts);
}

/// Which ranks the topology-integrative ranking sums.
struct TirComposition {
    std::vector<Metric> metrics{Metric::dsc, Metric::hd95, Metric::vs};
    bool include_bne_overall = true;
};

inline Constituent bne_overall_constituent(const RankingTable& bne) {
    Constituent c;
    c.name = "bne";
    for (const auto& t : bne.teams) {
        c.ranks[t.team_id] = t.final_rank;
        c.values[t.team_id] = t.combined_score;
    }
    return c;
}

inline RankingTable topology_integrative_ranking(const EvaluationRun& run, const SubsetFilter& subset = {},
                                                 const RankingOptions& opts = {}, const TirComposition& comp = {}) {
    std::vector<Constituent> parts;
    for (Metric m : comp.metrics) parts.push_back(metric_constituent(run, subset, m, opts));
    if (comp.include_bne_overall) parts.push_back(bne_overall_constituent(bne_ranking(run, subset, opts)));
    return combine_rankings(parts, opts.tie_mode, subset.describe());
}

enum class RankingKind { global, bne, tir };

inline const char* to_string(RankingKind k) {
    switch (k) {
        case RankingKind::global: return "global";
        case RankingKind::bne: return "bne";
        case RankingKind::tir: return "tir";
    }
    return "";
}

inline RankingKind parse_ranking_kind(std::string_view s) {
    if (s == "global") return RankingKind::global;
    if (s == "bne") return RankingKind::bne;
    if (s == "tir") return RankingKind::tir;
    fail(ErrorKind::usage, "ranking kind must be global, bne or tir");
}

inline RankingTable compute_ranking(RankingKind kind, const EvaluationRun& run, const SubsetFilter& subset,
                                    const RankingOptions& opts = {}) {
    switch (kind) {
        case RankingKind::global: return global_ranking(run, subset, opts);
        case RankingKind::bne: return bne_ranking(run, subset, opts);
        case RankingKind::tir: return topology_integrative_ranking(run, subset, opts);
    }
    fail(ErrorKind::usage, "unknown ranking kind");
}

/// Kendall tau-b between two rankings of the same teams. Defined as 1 when
/// both rankings are constant and 0 when only one is.
inline double kendall_tau_b(const RankMap& a, const RankMap& b) {
    std::vector<std::pair<int, int>> v;
    for (const auto& [team, r] : a) {
        auto it = b.find(team);
        if (it == b.end()) fail(ErrorKind::ranking, "team sets differ in Kendall tau");
        v.emplace_back(r, it->second);
    }
    if (v.size() != b.size()) fail(ErrorKind::ranking, "team sets differ in Kendall tau");
    long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            const int da = v[i].first - v[j].first;
            const int db = v[i].second - v[j].second;
            if (da == 0 && db == 0) continue;
            if (da == 0) ++ties_a;
            else if (db == 0) ++ties_b;
            else if ((da > 0) == (db > 0)) ++concordant;
            else ++discordant;
        }
    const double na = static_cast<double>(concordant + discordant + ties_a);
    const double nb = static_cast<double>(concordant + discordant + ties_b);
    const bool a_const = concordant + discordant + ties_b == 0;
    const bool b_const = concordant + discordant + ties_a == 0;
    if (a_const || b_const) return (a_const && b_const) ? 1.0 : 0.0;
    return static_cast<double>(concordant - discordant) / std::sqrt(na * nb);
}

inline constexpr const char* kBootstrapGenerator = "mt19937_64/seed_seq(seed_lo,seed_hi,index_lo,index_hi)/rejection";

/// Case indices of resample `index`; the stream depends only on (seed, index).
inline std::vector<std::size_t> bootstrap_indices(std::uint64_t seed, std::uint64_t index, std::size_t n) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 rng(seq);
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::vector<std::size_t> out(n);
    for (auto& o : out) {
        std::uint64_t x;
        do x = rng();
        while (x >= limit);
        o = static_cast<std::size_t>(x % bound);
    }
    return out;
}

/// Run made of the given cases (repeats allowed). Repeated cases get
/// distinct ids "<id>#<k>" and penalties are re-derived.
inline EvaluationRun resample_run(const EvaluationRun& run, const std::vector<const CaseMetadata*>& picks,
                                  const PenaltyPolicy& policy) {
    std::map<std::string, std::vector<const MetricRecord*>> by_case;
    for (const auto& r : run.records) by_case[r.case_id].push_back(&r);
    EvaluationRun out;
    out.teams = run.teams;
    out.config = run.config;
    out.provenance = run.provenance;
    std::map<std::string, int> seen;
    for (const CaseMetadata* c : picks) {
        const int k = seen[c->case_id]++;
        CaseMetadata meta = *c;
        if (k > 0) meta.case_id += "#" + std::to_string(k);
        for (const MetricRecord* r : by_case[c->case_id]) {
            MetricRecord copy = *r;
            copy.case_id = meta.case_id;
            out.records.push_back(std::move(copy));
        }
        out.cases.push_back(std::move(meta));
    }
    return apply_penalties(std::move(out), policy);
}

struct StabilityOptions {
    std::size_t resamples = 1000;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    PenaltyPolicy policy;
    RankingOptions ranking;
};

struct StabilityResult {
    RankingKind kind = RankingKind::global;
    std::string subset;
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
    std::string generator = kBootstrapGenerator;
    RankingTable full;
    std::vector<std::string> teams;  // sorted
    /// frequency[i][r - 1]: resamples in which teams[i] received rank r.
    std::vector<std::vector<std::size_t>> frequency;
    std::vector<double> kendall_tau;  // one per resample
};

inline StabilityResult bootstrap_stability(const EvaluationRun& run, const SubsetFilter& subset, RankingKind kind,
                                           const StabilityOptions& opts = {}) {
    if (opts.resamples < 1) fail(ErrorKind::usage, "bootstrap needs at least one resample");
    std::vector<const CaseMetadata*> cases;
    for (const auto& c : run.cases)
        if (subset.selects_case(c)) cases.push_back(&c);
    if (cases.size() < 2)
        fail(ErrorKind::stability, "subset '" + subset.describe() + "' has fewer than 2 cases; stability is undefined");

    StabilityResult res;
    res.kind = kind;
    res.subset = subset.describe();
    res.resamples = opts.resamples;
    res.seed = opts.seed;
    res.full = compute_ranking(kind, run, subset, opts.ranking);
    const RankMap full_ranks = res.full.final_ranks();
    for (const auto& [t, r] : full_ranks) res.teams.push_back(t);

    std::vector<RankMap> per(opts.resamples);
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    auto work = [&]() {
        try {
            for (;;) {
                const std::size_t b = next.fetch_add(1);
                if (b >= opts.resamples) return;
                std::vector<const CaseMetadata*> picks;
                for (std::size_t i : bootstrap_indices(opts.seed, b, cases.size())) picks.push_back(cases[i]);
                per[b] = compute_ranking(kind, resample_run(run, picks, opts.policy), subset, opts.ranking).final_ranks();
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(fatal_mutex);
            if (!fatal) fatal = std::current_exception();
            next.store(opts.resamples);
        }
    };
    const unsigned jobs = std::max(1u, opts.jobs);
    if (jobs == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    res.frequency.assign(res.teams.size(), std::vector<std::size_t>(res.teams.size(), 0));
    for (const auto& ranks : per) {
        for (std::size_t i = 0; i < res.teams.size(); ++i)
            res.frequency[i][static_cast<std::size_t>(ranks.at(res.teams[i]) - 1)] += 1;
        res.kendall_tau.push_back(kendall_tau_b(full_ranks, ranks));
    }
    return res;
}

struct SignificanceResult {
    std::string method;
    std::size_t n = 0;  // non-zero paired differences
    double w_plus = 0.0;
    double p_value = 1.0;
    bool significant = false;
    bool degenerate = false;
};

namespace detail {

inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

/// One-sided Wilcoxon signed-rank test that the differences are shifted
/// above zero. Zero differences are dropped; tied magnitudes get mid-ranks.
inline SignificanceResult wilcoxon_signed_rank(const std::vector<double>& diffs, double alpha = 0.05) {
    SignificanceResult res;
    std::vector<double> d;
    for (double x : diffs) {
        if (!std::isfinite(x)) fail(ErrorKind::ranking, "non-finite paired difference");
        if (x != 0.0) d.push_back(x);
    }
    res.n = d.size();
    if (d.empty()) {
        res.method = "wilcoxon_signed_rank";
        res.degenerate = true;
        return res;
    }
    std::vector<std::size_t> order(d.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
    // Doubled mid-ranks are integers.
    std::vector<long long> rank2(d.size());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const long long r2 = static_cast<long long>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    long long w2 = 0, total2 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        total2 += rank2[i];
        if (d[i] > 0) w2 += rank2[i];
    }
    res.w_plus = static_cast<double>(w2) / 2.0;
    const double n = static_cast<double>(d.size());
    if (d.size() <= 25) {
        res.method = "wilcoxon_signed_rank_exact";
        std::vector<double> count(static_cast<std::size_t>(total2 + 1), 0.0);
        count[0] = 1.0;
        long long reach = 0;
        for (long long r : rank2) {
            for (long long s = reach; s >= 0; --s)
                if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
            reach += r;
        }
        double tail = 0.0;
        for (long long s = w2; s <= total2; ++s) tail += count[static_cast<std::size_t>(s)];
        res.p_value = tail / std::ldexp(1.0, static_cast<int>(d.size()));
    } else {
        res.method = "wilcoxon_signed_rank_normal";
        const double mean = n * (n + 1.0) / 4.0;
        const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
        const double z = (res.w_plus - mean - 0.5) / std::sqrt(var);
        res.p_value = detail::normal_upper_tail(z);
    }
    res.p_value = std::min(1.0, res.p_value);
    res.significant = res.p_value < alpha;
    return res;
}

/// Tests whether team_a is better than team_b on per-case means of
/// `metric` over the subset.
inline SignificanceResult pairwise_significance(const EvaluationRun& run, const SubsetFilter& subset, Metric metric,
                                                const std::string& team_a, const std::string& team_b,
                                                double alpha = 0.05) {
    const auto a = per_case_means(run, subset, team_a, metric);
    const auto b = per_case_means(run, subset, team_b, metric);
    if (a.empty()) fail(ErrorKind::subset, "subset '" + subset.describe() + "' selects no cases for '" + team_a + "'");
    std::vector<double> diffs;
    for (const auto& [id, va] : a) {
        auto it = b.find(id);
        if (it == b.end()) fail(ErrorKind::ranking, "teams were not evaluated on identical case sets");
        diffs.push_back(higher_is_better(metric) ? va - it->second : it->second - va);
    }
    if (a.size() != b.size()) fail(ErrorKind::ranking, "teams were not evaluated on identical case sets");
    return wilcoxon_signed_rank(diffs, alpha);
}

}  // namespace fetaval

#endif  // FETAVAL_RANKING_HPP
