#ifndef FETAVAL_SYNTH_HPP
#define FETAVAL_SYNTH_HPP

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "labels.hpp"
#include "manifest.hpp"
#include "phantom.hpp"
#include "volume.hpp"
#include "volume_io.hpp"

namespace fetaval {

enum class Perturbation { none, dilate, erode, split, punch_hole, drop_label };

inline constexpr std::array<Perturbation, 6> kPerturbationCycle = {
    Perturbation::none,  Perturbation::dilate, Perturbation::drop_label,
    Perturbation::erode, Perturbation::split,  Perturbation::punch_hole};

inline const char* to_string(Perturbation p) {
    switch (p) {
        case Perturbation::none: return "none";
        case Perturbation::dilate: return "dilate";
        case Perturbation::erode: return "erode";
        case Perturbation::split: return "split";
        case Perturbation::punch_hole: return "punch-hole";
        case Perturbation::drop_label: return "drop-label";
    }
    return "";
}

inline Perturbation parse_perturbation(std::string_view s) {
    std::string t = detail::lowercase(detail::trim(s));
    for (char& c : t)
        if (c == '_') c = '-';
    for (Perturbation p : {Perturbation::none, Perturbation::dilate, Perturbation::erode, Perturbation::split,
                           Perturbation::punch_hole, Perturbation::drop_label})
        if (t == to_string(p)) return p;
    fail(ErrorKind::usage, "unknown error pattern '" + std::string(s) + "'");
}

namespace detail {

inline constexpr std::array<std::array<int, 3>, 6> kFaceNeighbors = {
    {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

inline void grow(std::vector<std::uint8_t>& v, const Dims& d, std::uint8_t c) {
    const std::vector<std::uint8_t> before = v;
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x) {
                if (before[d.index(x, y, z)] != c) continue;
                for (const auto& o : kFaceNeighbors) {
                    const std::int64_t a = x + o[0], b = y + o[1], e = z + o[2];
                    if (d.contains(a, b, e)) v[d.index(a, b, e)] = c;
                }
            }
}

inline void shrink(std::vector<std::uint8_t>& v, const Dims& d, std::uint8_t c) {
    const std::vector<std::uint8_t> before = v;
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x) {
                if (before[d.index(x, y, z)] != c) continue;
                for (const auto& o : kFaceNeighbors) {
                    const std::int64_t a = x + o[0], b = y + o[1], e = z + o[2];
                    if (!d.contains(a, b, e) || before[d.index(a, b, e)] != c) {
                        v[d.index(x, y, z)] = 0;
                        break;
                    }
                }
            }
}

struct Column {
    std::int64_t x = 0, z = 0, y0 = 0, y1 = -1;
};

/// Longest maximal run of `c` along y that stays inside the grid and is
/// walled in by `c` on all eight neighbouring columns.
inline std::optional<Column> tunnel_column(const std::vector<std::uint8_t>& v, const Dims& d, std::uint8_t c) {
    std::optional<Column> best;
    auto walled = [&](std::int64_t x, std::int64_t z, std::int64_t y0, std::int64_t y1) {
        for (std::int64_t dz = -1; dz <= 1; ++dz)
            for (std::int64_t dx = -1; dx <= 1; ++dx)
                for (std::int64_t y = y0; y <= y1; ++y)
                    if (v[d.index(x + dx, y, z + dz)] != c) return false;
        return true;
    };
    for (std::int64_t z = 1; z + 1 < d.nz; ++z)
        for (std::int64_t x = 1; x + 1 < d.nx; ++x)
            for (std::int64_t y = 1; y + 1 < d.ny; ++y) {
                if (v[d.index(x, y, z)] != c || v[d.index(x, y - 1, z)] == c) continue;
                std::int64_t y1 = y;
                while (y1 + 1 < d.ny && v[d.index(x, y1 + 1, z)] == c) ++y1;
                if (y1 + 1 < d.ny && walled(x, z, y, y1) && (!best || y1 - y > best->y1 - best->y0))
                    best = Column{x, z, y, y1};
                y = y1;
            }
    return best;
}

}  // namespace detail

/// Applies one error pattern to `tissue`. Removed voxels become background.
///   dilate/erode  `amount` rounds of 6-neighbour growth/shrinkage
///   split         clears `amount` planes at the tissue's middle y
///   punch_hole    clears one y-column through the tissue (one tunnel)
///   drop_label    clears the tissue
inline LabelVolume perturb(const LabelVolume& vol, Perturbation p, Tissue tissue, int amount = 1) {
    if (!is_scored(tissue)) fail(ErrorKind::usage, "perturbations apply to tissue labels 1..7");
    if (amount < 1) fail(ErrorKind::usage, "perturbation amount must be >= 1");
    const Dims& d = vol.dims();
    const auto c = static_cast<std::uint8_t>(code(tissue));
    std::vector<std::uint8_t> v(vol.voxels().begin(), vol.voxels().end());
    switch (p) {
        case Perturbation::none: break;
        case Perturbation::dilate:
            for (int i = 0; i < amount; ++i) detail::grow(v, d, c);
            break;
        case Perturbation::erode:
            for (int i = 0; i < amount; ++i) detail::shrink(v, d, c);
            break;
        case Perturbation::split: {
            Box box;
            for (std::int64_t z = 0; z < d.nz; ++z)
                for (std::int64_t y = 0; y < d.ny; ++y)
                    for (std::int64_t x = 0; x < d.nx; ++x)
                        if (v[d.index(x, y, z)] == c) box.expand(x, y, z);
            if (box.empty()) fail(ErrorKind::phantom, "cannot split absent tissue " + std::string(name(tissue)));
            if (box.hi.y - box.lo.y < amount + 2)
                fail(ErrorKind::phantom, std::string(name(tissue)) + " is too thin along y to split");
            const std::int64_t y0 = (box.lo.y + box.hi.y - amount) / 2;
            for (std::int64_t z = 0; z < d.nz; ++z)
                for (std::int64_t y = y0; y < y0 + amount; ++y)
                    for (std::int64_t x = 0; x < d.nx; ++x)
                        if (v[d.index(x, y, z)] == c) v[d.index(x, y, z)] = 0;
            break;
        }
        case Perturbation::punch_hole: {
            auto col = detail::tunnel_column(v, d, c);
            if (!col) fail(ErrorKind::phantom, std::string(name(tissue)) + " has no column that can hold a tunnel");
            for (std::int64_t y = col->y0; y <= col->y1; ++y) v[d.index(col->x, y, col->z)] = 0;
            break;
        }
        case Perturbation::drop_label:
            for (auto& x : v)
                if (x == c) x = 0;
            break;
    }
    return LabelVolume(d, vol.spacing(), std::move(v), vol.case_id());
}

struct SynthOptions {
    int teams = 3;
    int cases = 4;
    std::int64_t size = 32;
    Spacing spacing{0.8, 0.8, 0.8};
    /// Applied by every team when set; otherwise team k uses
    /// kPerturbationCycle[k mod 6].
    std::optional<Perturbation> error;
    Tissue tissue = Tissue::wm;
    int amount = 1;
    std::string extension = ".nii.gz";
};

struct SynthResult {
    std::filesystem::path manifest;
    std::vector<std::filesystem::path> ground_truths;
    std::vector<std::filesystem::path> predictions;
};

inline const std::vector<std::string>& synth_institutions() {
    static const std::vector<std::string> v = {"Kispi", "Vienna", "CHUV", "UCSF"};
    return v;
}

inline std::string synth_case_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "sub-%03d", i + 1);
    return buf;
}

inline std::string synth_team_id(int k) { return "team_" + std::to_string(k + 1); }

inline Perturbation synth_team_error(const SynthOptions& o, int k) {
    return o.error ? *o.error : kPerturbationCycle[static_cast<std::size_t>(k) % kPerturbationCycle.size()];
}

/// Writes brain-like ground truths, perturbed team predictions and a
/// manifest.csv wiring them together under `dir`.
inline SynthResult synthesize_challenge(const std::filesystem::path& dir, const SynthOptions& o) {
    if (o.teams < 1 || o.cases < 1) fail(ErrorKind::usage, "synth needs at least one team and one case");
    if (o.extension != ".nii.gz" && o.extension != ".nii" && o.extension != ".lv")
        fail(ErrorKind::usage, "synth output format must be .nii.gz, .nii or .lv");
    std::filesystem::create_directories(dir / "gt");
    SynthResult res;
    std::ostringstream gt_csv, team_csv;
    gt_csv << kGtHeader << '\n';
    team_csv << kTeamHeader << '\n';
    const auto& insts = synth_institutions();
    for (int i = 0; i < o.cases; ++i) {
        PhantomSpec spec;
        spec.kind = PhantomKind::full_brainlike;
        spec.dims = {o.size, o.size, o.size};
        spec.spacing = o.spacing;
        spec.case_id = synth_case_id(i);
        spec.shift = {i % 2, (i / 2) % 2, 0};
        const LabelVolume gt = generate_phantom(spec);
        const std::string gt_rel = "gt/" + spec.case_id + o.extension;
        save_label_volume(dir / gt_rel, gt);
        res.ground_truths.push_back(dir / gt_rel);
        const std::string& inst = insts[static_cast<std::size_t>(i) % insts.size()];
        gt_csv << spec.case_id << ',' << gt_rel << ',' << inst << ','
               << to_string(institution_domains().at(inst)) << ',' << 20 + i % 15 << ','
               << (i % 3 == 2 ? "pathological" : "normal") << ',' << 3 - i % 3 << ','
               << sr_methods()[static_cast<std::size_t>(i) % sr_methods().size()] << '\n';
        for (int k = 0; k < o.teams; ++k) {
            const std::string team = synth_team_id(k);
            std::filesystem::create_directories(dir / "pred" / team);
            const LabelVolume pred = perturb(gt, synth_team_error(o, k), o.tissue, o.amount);
            const std::string rel = "pred/" + team + "/" + spec.case_id + o.extension;
            save_label_volume(dir / rel, pred);
            res.predictions.push_back(dir / rel);
            team_csv << team << ',' << spec.case_id << ',' << rel << '\n';
        }
    }
    res.manifest = dir / "manifest.csv";
    std::ofstream f(res.manifest, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot write '" + res.manifest.string() + "'");
    f << gt_csv.str() << '\n' << team_csv.str();
    return res;
}

}  // namespace fetaval

#endif  // FETAVAL_SYNTH_HPP
