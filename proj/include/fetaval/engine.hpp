#ifndef FETAVAL_ENGINE_HPP
#define FETAVAL_ENGINE_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "labels.hpp"
#include "manifest.hpp"
#include "overlap.hpp"
#include "subset.hpp"
#include "surface.hpp"
#include "topology.hpp"
#include "volume.hpp"
#include "volume_io.hpp"

namespace fetaval {

enum class RecordFlag : std::uint8_t {
    prediction_missing = 1 << 0,
    gt_empty = 1 << 1,
    both_empty = 1 << 2,
    penalized_hd95 = 1 << 3,
    penalized_bne = 1 << 4,
};

inline constexpr std::array<std::pair<RecordFlag, const char*>, 5> kFlagNames = {{
    {RecordFlag::prediction_missing, "prediction_missing"},
    {RecordFlag::gt_empty, "gt_empty"},
    {RecordFlag::both_empty, "both_empty"},
    {RecordFlag::penalized_hd95, "penalized_hd95"},
    {RecordFlag::penalized_bne, "penalized_bne"},
}};

struct RecordFlags {
    std::uint8_t bits = 0;

    bool has(RecordFlag f) const { return (bits & static_cast<std::uint8_t>(f)) != 0; }
    void set(RecordFlag f, bool on = true) {
        if (on) bits = static_cast<std::uint8_t>(bits | static_cast<std::uint8_t>(f));
        else bits = static_cast<std::uint8_t>(bits & ~static_cast<std::uint8_t>(f));
    }
    /// Semicolon-joined names in declaration order.
    std::string to_string() const {
        std::string out;
        for (const auto& [f, n] : kFlagNames) {
            if (!has(f)) continue;
            if (!out.empty()) out += ';';
            out += n;
        }
        return out;
    }
    static RecordFlags parse(std::string_view s) {
        RecordFlags flags;
        std::size_t start = 0;
        while (start <= s.size()) {
            std::size_t end = s.find(';', start);
            if (end == std::string_view::npos) end = s.size();
            const std::string_view tok = s.substr(start, end - start);
            if (!tok.empty()) {
                bool known = false;
                for (const auto& [f, n] : kFlagNames)
                    if (tok == n) {
                        flags.set(f);
                        known = true;
                    }
                if (!known) fail(ErrorKind::format, "unknown record flag '" + std::string(tok) + "'");
            }
            start = end + 1;
        }
        return flags;
    }
    friend bool operator==(const RecordFlags&, const RecordFlags&) = default;
};

/// One (team, case, tissue) evaluation. `hd95_mm` and `bne` are empty while
/// a penalty is pending.
struct MetricRecord {
    std::string team_id;
    std::string case_id;
    Tissue tissue = Tissue::ecsf;
    double dsc = 0.0;
    std::optional<double> hd95_mm;
    double vs = 0.0;
    std::optional<BettiTriple> betti;
    std::optional<BneTriple> bne;
    RecordFlags flags;

    bool needs_hd95_penalty() const {
        return flags.has(RecordFlag::prediction_missing) ||
               (flags.has(RecordFlag::gt_empty) && !flags.has(RecordFlag::both_empty));
    }
    bool needs_bne_penalty() const { return flags.has(RecordFlag::prediction_missing); }
};

struct EvaluationConfig {
    double hd_percentile = 95.0;
    Connectivity connectivity = Connectivity::twenty_six;
    ExpectedTopology expected = ExpectedTopology::fetal_brain();
};

namespace detail {

inline std::array<Box, kLabelCount> label_boxes(const LabelVolume& vol) {
    std::array<Box, kLabelCount> boxes{};
    const Dims& d = vol.dims();
    const auto v = vol.voxels();
    std::size_t i = 0;
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x, ++i) {
                const std::uint8_t c = v[i];
                if (c != 0) boxes[c].expand(x, y, z);
            }
    return boxes;
}

}  // namespace detail

/// Scores all seven tissues of one prediction against its ground truth.
/// Penalties are left unresolved (see apply_penalties).
inline std::array<MetricRecord, kTissueCount> evaluate_case(const LabelVolume& pred, const LabelVolume& gt,
                                                            const CaseMetadata& meta, const std::string& team_id = {},
                                                            const EvaluationConfig& cfg = {}) {
    require_same_grid(pred, gt);
    const auto pred_boxes = detail::label_boxes(pred);
    const auto gt_boxes = detail::label_boxes(gt);
    std::array<MetricRecord, kTissueCount> out;
    for (std::size_t k = 0; k < kTissues.size(); ++k) {
        const Tissue t = kTissues[k];
        const auto c = static_cast<std::size_t>(code(t));
        MetricRecord& r = out[k];
        r.team_id = team_id;
        r.case_id = meta.case_id;
        r.tissue = t;
        const bool pred_empty = pred_boxes[c].empty();
        const bool gt_empty = gt_boxes[c].empty();
        if (pred_empty && gt_empty) {
            r.flags.set(RecordFlag::gt_empty);
            r.flags.set(RecordFlag::both_empty);
            r.dsc = 1.0;
            r.vs = 1.0;
            r.hd95_mm = 0.0;
            r.bne = BneTriple{0, 0, 0};
            continue;
        }
        // One background layer around both masks keeps surface and topology
        // results identical to the full-grid computation.
        const Box box = pred_boxes[c].united(gt_boxes[c]).padded(1);
        const BinaryMask pm = cropped_mask(pred, t, box);
        const BinaryMask gm = cropped_mask(gt, t, box);
        const OverlapCounts counts = overlap_counts(pm, gm);
        r.dsc = dice(counts);
        r.vs = volume_similarity(counts);
        if (gt_empty) r.flags.set(RecordFlag::gt_empty);
        if (pred_empty) {
            r.flags.set(RecordFlag::prediction_missing);
            r.dsc = 0.0;
            r.vs = 0.0;
            continue;
        }
        if (!gt_empty) {
            const SurfacePointSet ps = extract_surface(pm);
            const SurfacePointSet gs = extract_surface(gm);
            r.hd95_mm = hausdorff_percentile(ps, gs, cfg.hd_percentile);
        } else {
            r.dsc = 0.0;
            r.vs = 0.0;
        }
        r.betti = betti_numbers(pm, cfg.connectivity);
        r.bne = betti_number_error(*r.betti, t, cfg.expected);
    }
    return out;
}

enum class PenaltyScope { per_label, global };

inline const char* to_string(PenaltyScope s) { return s == PenaltyScope::per_label ? "per_label" : "global"; }

inline PenaltyScope parse_penalty_scope(std::string_view s) {
    if (s == "per_label" || s == "per-label" || s == "label") return PenaltyScope::per_label;
    if (s == "global") return PenaltyScope::global;
    fail(ErrorKind::usage, "penalty scope must be per_label or global");
}

/// Missing HD95 gets twice the largest finite HD95 in scope; missing BNE_k
/// gets twice the worst finite BNE_k of the same tissue over all submissions.
struct PenaltyPolicy {
    PenaltyScope hd95_scope = PenaltyScope::per_label;
    /// Used when every finite value in scope is zero, so the penalty still
    /// exceeds all of them.
    double min_penalty = 1.0;
    std::optional<double> fallback_hd95;
    std::optional<double> fallback_bne;
};

struct Provenance {
    std::string tool_version;
    std::string config_hash;
    std::string penalty_scope;
};

struct EvaluationRun {
    std::vector<CaseMetadata> cases;
    std::vector<std::string> teams;
    std::vector<MetricRecord> records;
    EvaluationConfig config;
    Provenance provenance;

    const CaseMetadata* find_case(std::string_view id) const {
        for (const auto& c : cases)
            if (c.case_id == id) return &c;
        return nullptr;
    }
};

inline void sort_records(std::vector<MetricRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const MetricRecord& a, const MetricRecord& b) {
        if (a.team_id != b.team_id) return a.team_id < b.team_id;
        if (a.case_id != b.case_id) return a.case_id < b.case_id;
        return code(a.tissue) < code(b.tissue);
    });
}

namespace detail {

inline double penalty_value(double worst, const PenaltyPolicy& p, const std::optional<double>& fallback,
                            const std::string& what) {
    if (!std::isfinite(worst)) {
        if (fallback) return *fallback;
        fail(ErrorKind::policy, "no finite " + what +
                                    " exists in scope to derive a penalty; set an explicit fallback penalty");
    }
    const double v = 2.0 * worst;
    return v > worst ? v : std::max(p.min_penalty, worst + p.min_penalty);
}

}  // namespace detail

/// Resolves pending penalties from the pool of finite values. Previously
/// penalized records are re-derived, so the result does not depend on
/// evaluation order or on earlier penalty passes.
inline EvaluationRun apply_penalties(EvaluationRun run, const PenaltyPolicy& policy = {}) {
    constexpr double none = -std::numeric_limits<double>::infinity();
    std::array<double, kLabelCount> hd_worst;
    hd_worst.fill(none);
    double hd_worst_global = none;
    std::array<std::array<double, 3>, kLabelCount> bne_worst;
    for (auto& a : bne_worst) a.fill(none);

    for (const auto& r : run.records) {
        const auto c = static_cast<std::size_t>(code(r.tissue));
        if (!r.needs_hd95_penalty() && r.hd95_mm) {
            hd_worst[c] = std::max(hd_worst[c], *r.hd95_mm);
            hd_worst_global = std::max(hd_worst_global, *r.hd95_mm);
        }
        if (!r.needs_bne_penalty() && r.bne && !r.flags.has(RecordFlag::both_empty)) {
            for (int k = 0; k < 3; ++k) bne_worst[c][static_cast<std::size_t>(k)] =
                std::max(bne_worst[c][static_cast<std::size_t>(k)], (*r.bne)[k]);
        }
    }
    auto finite_or_nan = [](double v) { return v == -std::numeric_limits<double>::infinity() ? NAN : v; };
    for (auto& r : run.records) {
        const auto c = static_cast<std::size_t>(code(r.tissue));
        r.flags.set(RecordFlag::penalized_hd95, false);
        r.flags.set(RecordFlag::penalized_bne, false);
        if (r.needs_hd95_penalty()) {
            const double worst = policy.hd95_scope == PenaltyScope::per_label ? hd_worst[c] : hd_worst_global;
            r.hd95_mm = detail::penalty_value(finite_or_nan(worst), policy, policy.fallback_hd95,
                                              "HD95 for " + std::string(name(r.tissue)));
            r.flags.set(RecordFlag::penalized_hd95);
        }
        if (r.needs_bne_penalty()) {
            BneTriple b;
            for (int k = 0; k < 3; ++k)
                b[k] = detail::penalty_value(finite_or_nan(bne_worst[c][static_cast<std::size_t>(k)]), policy,
                                             policy.fallback_bne,
                                             "BNE_" + std::to_string(k) + " for " + std::string(name(r.tissue)));
            r.bne = b;
            r.betti.reset();
            r.flags.set(RecordFlag::penalized_bne);
        }
    }
    run.provenance.penalty_scope = to_string(policy.hd95_scope);
    return run;
}

enum class Metric { dsc, hd95, vs, bne0, bne1, bne2 };

inline constexpr std::array<Metric, 6> kAllMetrics = {Metric::dsc,  Metric::hd95, Metric::vs,
                                                      Metric::bne0, Metric::bne1, Metric::bne2};

inline const char* to_string(Metric m) {
    switch (m) {
        case Metric::dsc: return "dsc";
        case Metric::hd95: return "hd95";
        case Metric::vs: return "vs";
        case Metric::bne0: return "bne0";
        case Metric::bne1: return "bne1";
        case Metric::bne2: return "bne2";
    }
    return "";
}

inline Metric parse_metric(std::string_view s) {
    for (Metric m : kAllMetrics)
        if (s == to_string(m)) return m;
    fail(ErrorKind::usage, "unknown metric '" + std::string(s) + "'");
}

inline bool higher_is_better(Metric m) { return m == Metric::dsc || m == Metric::vs; }

inline std::optional<double> metric_value(const MetricRecord& r, Metric m) {
    switch (m) {
        case Metric::dsc: return r.dsc;
        case Metric::vs: return r.vs;
        case Metric::hd95: return r.hd95_mm;
        case Metric::bne0: return r.bne ? std::optional<double>(r.bne->e0) : std::nullopt;
        case Metric::bne1: return r.bne ? std::optional<double>(r.bne->e1) : std::nullopt;
        case Metric::bne2: return r.bne ? std::optional<double>(r.bne->e2) : std::nullopt;
    }
    return std::nullopt;
}

struct AggregateStat {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    std::size_t n = 0;
};

struct AggregateOptions {
    bool include_both_empty = true;
};

/// Flat mean and standard deviation over every selected (case, tissue)
/// record of each team.
inline std::map<std::string, AggregateStat> aggregate(const EvaluationRun& run, const SubsetFilter& subset, Metric metric,
                                                      const AggregateOptions& opts = {}) {
    std::map<std::string, std::vector<double>> values;
    for (const auto& t : run.teams) values[t];
    for (const auto& r : run.records) {
        const CaseMetadata* meta = run.find_case(r.case_id);
        if (!meta) fail(ErrorKind::data, "record references unknown case '" + r.case_id + "'");
        if (!subset.selects(*meta, r.tissue)) continue;
        if (!opts.include_both_empty && r.flags.has(RecordFlag::both_empty)) continue;
        auto v = metric_value(r, metric);
        if (!v || !std::isfinite(*v))
            fail(ErrorKind::policy, std::string(to_string(metric)) + " unresolved for team '" + r.team_id + "' case '" +
                                        r.case_id + "' (apply penalties first)");
        values[r.team_id].push_back(*v);
    }
    std::map<std::string, AggregateStat> out;
    for (const auto& [team, vs] : values) {
        if (vs.empty()) fail(ErrorKind::subset, "subset '" + subset.describe() + "' selects no records for team '" + team + "'");
        AggregateStat s;
        s.n = vs.size();
        double sum = 0.0;
        for (double v : vs) sum += v;
        s.mean = sum / static_cast<double>(s.n);
        double ss = 0.0;
        for (double v : vs) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n));
        out[team] = s;
    }
    if (out.empty()) fail(ErrorKind::subset, "subset '" + subset.describe() + "' selects no teams");
    return out;
}

/// Per-case mean over the selected tissues, for paired tests.
inline std::map<std::string, double> per_case_means(const EvaluationRun& run, const SubsetFilter& subset,
                                                    const std::string& team, Metric metric) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& r : run.records) {
        if (r.team_id != team) continue;
        const CaseMetadata* meta = run.find_case(r.case_id);
        if (!meta || !subset.selects(*meta, r.tissue)) continue;
        auto v = metric_value(r, metric);
        if (!v) fail(ErrorKind::policy, "unresolved metric value (apply penalties first)");
        acc[r.case_id].first += *v;
        acc[r.case_id].second += 1;
    }
    std::map<std::string, double> out;
    for (const auto& [id, p] : acc) out[id] = p.first / static_cast<double>(p.second);
    return out;
}

using VolumeLoader = std::function<LabelVolume(const std::filesystem::path&)>;

struct EngineOptions {
    unsigned jobs = 1;
    bool skip_broken = false;
    LoadOptions load;
    std::function<void(const std::string&)> progress;
};

struct CaseFailure {
    std::string case_id;
    std::string team_id;  // empty when the ground truth failed
    std::string message;
};

class EvaluationFailed : public Error {
public:
    EvaluationFailed(ErrorKind kind, const std::string& what, std::vector<CaseFailure> failures)
        : Error(kind, what), failures_(std::move(failures)) {}
    const std::vector<CaseFailure>& failures() const { return failures_; }

private:
    std::vector<CaseFailure> failures_;
};

/// Phase 1 over all (team, case) pairs in parallel, then the penalty pass.
/// Workers only write to their own case slot, and the merge is ordered, so
/// the output does not depend on `jobs`.
inline EvaluationRun evaluate_manifest(const Manifest& manifest, const EvaluationConfig& cfg,
                                       const PenaltyPolicy& policy, const EngineOptions& opts = {},
                                       VolumeLoader loader = {}) {
    if (!loader) {
        loader = [load = opts.load](const std::filesystem::path& p) { return load_label_volume(p, load); };
    }
    const std::vector<std::string> teams = manifest.team_ids();
    std::map<std::pair<std::string, std::string>, const TeamEntry*> by_pair;
    for (const auto& e : manifest.team_entries) by_pair[{e.team_id, e.case_id}] = &e;

    struct Slot {
        std::vector<MetricRecord> records;
        std::vector<CaseFailure> failures;
    };
    std::vector<Slot> slots(manifest.gt_entries.size());
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;

    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= manifest.gt_entries.size()) return;
            const GtEntry& entry = manifest.gt_entries[i];
            Slot& slot = slots[i];
            std::optional<LabelVolume> gt;
            try {
                gt = loader(entry.gt_path);
            } catch (const std::exception& e) {
                slot.failures.push_back({entry.case_id, "", e.what()});
                continue;
            }
            for (const auto& team : teams) {
                auto it = by_pair.find({team, entry.case_id});
                if (it == by_pair.end()) {
                    slot.failures.push_back({entry.case_id, team, "no prediction listed in the manifest"});
                    continue;
                }
                try {
                    const LabelVolume pred = loader(it->second->prediction_path);
                    auto recs = evaluate_case(pred, *gt, entry.meta, team, cfg);
                    slot.records.insert(slot.records.end(), recs.begin(), recs.end());
                } catch (const Error& e) {
                    if (e.kind() == ErrorKind::topology) throw;
                    slot.failures.push_back({entry.case_id, team, e.what()});
                } catch (const std::exception& e) {
                    slot.failures.push_back({entry.case_id, team, e.what()});
                }
            }
            if (opts.progress) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                opts.progress("evaluated case " + entry.case_id);
            }
        }
    };

    const unsigned jobs = std::max(1u, opts.jobs);
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    auto guarded = [&]() {
        try {
            work();
        } catch (...) {
            std::lock_guard<std::mutex> lock(fatal_mutex);
            if (!fatal) fatal = std::current_exception();
            next.store(manifest.gt_entries.size());
        }
    };
    if (jobs == 1) {
        guarded();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(guarded);
        for (auto& th : pool) th.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    EvaluationRun run;
    run.config = cfg;
    run.teams = teams;
    std::vector<CaseFailure> failures;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i].failures.empty()) {
            failures.insert(failures.end(), slots[i].failures.begin(), slots[i].failures.end());
            continue;
        }
        run.cases.push_back(manifest.gt_entries[i].meta);
        run.records.insert(run.records.end(), slots[i].records.begin(), slots[i].records.end());
    }
    if (!failures.empty() && !opts.skip_broken) {
        std::string msg = std::to_string(failures.size()) + " evaluation failure(s):";
        for (const auto& f : failures)
            msg += "\n  case " + f.case_id + (f.team_id.empty() ? " (ground truth)" : " team " + f.team_id) + ": " + f.message;
        throw EvaluationFailed(ErrorKind::data, msg, failures);
    }
    if (run.cases.empty()) fail(ErrorKind::data, "no case could be evaluated");
    std::sort(run.cases.begin(), run.cases.end(),
              [](const CaseMetadata& a, const CaseMetadata& b) { return a.case_id < b.case_id; });
    sort_records(run.records);
    return apply_penalties(std::move(run), policy);
}

}  // namespace fetaval

#endif  // FETAVAL_ENGINE_HPP
