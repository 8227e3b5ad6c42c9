#ifndef FETAVAL_PHANTOM_HPP
#define FETAVAL_PHANTOM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "labels.hpp"
#include "topology.hpp"
#include "volume.hpp"

namespace fetaval {

enum class PhantomKind { solid_ball, hollow_shell, voxel_torus, two_components, nested_labels, full_brainlike };

inline std::optional<PhantomKind> parse_phantom_kind(std::string_view s) {
    if (s == "solid_ball") return PhantomKind::solid_ball;
    if (s == "hollow_shell") return PhantomKind::hollow_shell;
    if (s == "voxel_torus") return PhantomKind::voxel_torus;
    if (s == "two_components") return PhantomKind::two_components;
    if (s == "nested_labels") return PhantomKind::nested_labels;
    if (s == "full_brainlike") return PhantomKind::full_brainlike;
    return std::nullopt;
}

/// Geometry recipe. `radius` applies to balls, `side` to the shell and ring,
/// `shift` translates the whole shape by whole voxels.
struct PhantomSpec {
    PhantomKind kind = PhantomKind::solid_ball;
    Dims dims{9, 9, 9};
    Spacing spacing{1.0, 1.0, 1.0};
    double radius = 3.0;
    int side = 3;
    Tissue label = Tissue::wm;
    Tissue inner_label = Tissue::ventricles;
    Index3 shift{0, 0, 0};
    std::string case_id = "phantom";
};

/// Betti numbers each label of the generated phantom has by construction.
///   solid_ball      label (1,0,0)
///   hollow_shell    label (1,0,1)
///   voxel_torus     label (1,1,0)
///   two_components  label (2,0,0)
///   nested_labels   inner (1,0,0), outer label (1,0,1)
///   full_brainlike  the fetal-brain anatomical expectation for all seven
inline std::map<Tissue, BettiTriple> expected_betti(const PhantomSpec& spec) {
    switch (spec.kind) {
        case PhantomKind::solid_ball: return {{spec.label, {1, 0, 0}}};
        case PhantomKind::hollow_shell: return {{spec.label, {1, 0, 1}}};
        case PhantomKind::voxel_torus: return {{spec.label, {1, 1, 0}}};
        case PhantomKind::two_components: return {{spec.label, {2, 0, 0}}};
        case PhantomKind::nested_labels: return {{spec.inner_label, {1, 0, 0}}, {spec.label, {1, 0, 1}}};
        case PhantomKind::full_brainlike: {
            std::map<Tissue, BettiTriple> out;
            const auto e = ExpectedTopology::fetal_brain();
            for (Tissue t : kTissues) out[t] = e[t];
            return out;
        }
    }
    return {};
}

namespace detail {

class PhantomCanvas {
public:
    PhantomCanvas(const PhantomSpec& spec)
        : spec_(spec), codes_(spec.dims.voxel_count(), 0) {
        validate_grid(spec.dims, spec.spacing);
    }

    /// Grid center plus shift.
    double center(int axis) const {
        const Dims& d = spec_.dims;
        const double n = static_cast<double>(axis == 0 ? d.nx : (axis == 1 ? d.ny : d.nz));
        const double s = static_cast<double>(axis == 0 ? spec_.shift.x : (axis == 1 ? spec_.shift.y : spec_.shift.z));
        return (n - 1.0) / 2.0 + s;
    }

    void require_inside(double lo_x, double hi_x, double lo_y, double hi_y, double lo_z, double hi_z,
                        const char* what) const {
        const Dims& d = spec_.dims;
        if (lo_x < 0 || lo_y < 0 || lo_z < 0 || hi_x > static_cast<double>(d.nx - 1) ||
            hi_y > static_cast<double>(d.ny - 1) || hi_z > static_cast<double>(d.nz - 1))
            fail(ErrorKind::phantom, std::string(what) + " does not fit the grid");
    }

    template <typename Pred>
    void paint(Tissue t, Pred inside) {
        const Dims& d = spec_.dims;
        for (std::int64_t z = 0; z < d.nz; ++z)
            for (std::int64_t y = 0; y < d.ny; ++y)
                for (std::int64_t x = 0; x < d.nx; ++x)
                    if (inside(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)))
                        codes_[d.index(x, y, z)] = static_cast<std::uint8_t>(code(t));
    }

    LabelVolume finish() { return LabelVolume(spec_.dims, spec_.spacing, std::move(codes_), spec_.case_id); }

private:
    const PhantomSpec& spec_;
    std::vector<std::uint8_t> codes_;
};

inline double sq(double v) { return v * v; }

}  // namespace detail

inline LabelVolume generate_phantom(const PhantomSpec& spec) {
    using detail::sq;
    if (!is_scored(spec.label) || !is_scored(spec.inner_label))
        fail(ErrorKind::phantom, "phantom labels must be tissue codes 1..7");
    detail::PhantomCanvas canvas(spec);
    const double cx = canvas.center(0), cy = canvas.center(1), cz = canvas.center(2);

    switch (spec.kind) {
        case PhantomKind::solid_ball: {
            const double r = spec.radius;
            if (!(r >= 0.0)) fail(ErrorKind::phantom, "ball radius must be nonnegative");
            canvas.require_inside(cx - r, cx + r, cy - r, cy + r, cz - r, cz + r, "ball");
            canvas.paint(spec.label, [&](double x, double y, double z) {
                return sq(x - cx) + sq(y - cy) + sq(z - cz) <= r * r + 1e-9;
            });
            break;
        }
        case PhantomKind::hollow_shell: {
            if (spec.side < 3) fail(ErrorKind::phantom, "hollow shell side must be >= 3");
            const double h = (spec.side - 1) / 2.0;
            canvas.require_inside(cx - h, cx + h, cy - h, cy + h, cz - h, cz + h, "hollow shell");
            canvas.paint(spec.label, [&](double x, double y, double z) {
                const double m = std::max({std::abs(x - cx), std::abs(y - cy), std::abs(z - cz)});
                return m <= h + 1e-9 && m > h - 1.0 + 1e-9;
            });
            break;
        }
        case PhantomKind::voxel_torus: {
            if (spec.side < 3) fail(ErrorKind::phantom, "ring side must be >= 3");
            const double h = (spec.side - 1) / 2.0;
            const double z0 = std::floor(cz);
            canvas.require_inside(cx - h, cx + h, cy - h, cy + h, z0, z0, "square ring");
            canvas.paint(spec.label, [&](double x, double y, double z) {
                const double m = std::max(std::abs(x - cx), std::abs(y - cy));
                return z == z0 && m <= h + 1e-9 && m > h - 1.0 + 1e-9;
            });
            break;
        }
        case PhantomKind::two_components: {
            const double r = spec.radius;
            if (!(r >= 0.0)) fail(ErrorKind::phantom, "ball radius must be nonnegative");
            const double ax = cx - (r + 1.5), bx = cx + (r + 1.5);
            canvas.require_inside(ax - r, bx + r, cy - r, cy + r, cz - r, cz + r, "two balls");
            canvas.paint(spec.label, [&](double x, double y, double z) {
                const double yz = sq(y - cy) + sq(z - cz);
                return sq(x - ax) + yz <= r * r + 1e-9 || sq(x - bx) + yz <= r * r + 1e-9;
            });
            break;
        }
        case PhantomKind::nested_labels: {
            const double outer = spec.radius;
            const double inner = outer - 2.0;
            if (inner < 1.0) fail(ErrorKind::phantom, "nested phantom needs radius >= 3");
            if (spec.label == spec.inner_label) fail(ErrorKind::phantom, "nested phantom needs two distinct labels");
            canvas.require_inside(cx - outer, cx + outer, cy - outer, cy + outer, cz - outer, cz + outer,
                                  "nested balls");
            canvas.paint(spec.label, [&](double x, double y, double z) {
                return sq(x - cx) + sq(y - cy) + sq(z - cz) <= outer * outer + 1e-9;
            });
            canvas.paint(spec.inner_label, [&](double x, double y, double z) {
                return sq(x - cx) + sq(y - cy) + sq(z - cz) <= inner * inner + 1e-9;
            });
            break;
        }
        case PhantomKind::full_brainlike: {
            // Upper half-ball cut at z = base: eCSF dome, GM dome split at the
            // midline into two hemispheres, WM core with ventricle and deep GM
            // notches open to the cut plane. Cerebellum and brainstem hang
            // below the cut.
            const Dims& d = spec.dims;
            const double n = static_cast<double>(std::min({d.nx, d.ny, d.nz}));
            if (n < 24) fail(ErrorKind::phantom, "full_brainlike needs at least 24 voxels per axis");
            const double base = std::floor(cz - 0.05 * n);
            const double wall = std::max(2.0, std::round(0.08 * n));
            const double r_out = std::floor(0.40 * n);
            const double r_gm = r_out - wall;
            const double r_wm = r_gm - wall;
            const double notch = std::max(1.0, std::round(0.05 * n));
            const double notch_h = std::max(2.0, std::round(0.12 * n));
            const double r_cb = std::floor(0.16 * n);
            const double cb_y = cy - 0.5 * r_out, cb_z = base - r_cb - 1.0;
            const double r_bs = std::max(1.0, std::round(0.05 * n));
            const double bs_y = cy + 0.40 * r_wm, bs_len = std::round(0.25 * n);
            canvas.require_inside(cx - r_out, cx + r_out, cy - r_out, cy + r_out, cb_z - r_cb, base + r_out,
                                  "brain-like phantom");

            auto dist2 = [&](double x, double y, double z) { return sq(x - cx) + sq(y - cy) + sq(z - base); };
            auto upper = [&](double z) { return z >= base; };
            canvas.paint(Tissue::ecsf, [&](double x, double y, double z) {
                return upper(z) && dist2(x, y, z) <= r_out * r_out;
            });
            canvas.paint(Tissue::gm, [&](double x, double y, double z) {
                return upper(z) && dist2(x, y, z) <= r_gm * r_gm && std::abs(x - cx) >= 1.0;
            });
            canvas.paint(Tissue::wm, [&](double x, double y, double z) {
                return upper(z) && dist2(x, y, z) <= r_wm * r_wm;
            });
            canvas.paint(Tissue::ventricles, [&](double x, double y, double z) {
                return z >= base && z < base + notch_h && std::abs(x - cx) <= notch &&
                       std::abs(y - (cy + 0.35 * r_wm)) <= notch;
            });
            canvas.paint(Tissue::deep_gm, [&](double x, double y, double z) {
                return z >= base && z < base + notch_h && std::abs(x - cx) <= notch &&
                       std::abs(y - (cy - 0.35 * r_wm)) <= notch;
            });
            canvas.paint(Tissue::cerebellum, [&](double x, double y, double z) {
                return sq(x - cx) + sq(y - cb_y) + sq(z - cb_z) <= r_cb * r_cb;
            });
            canvas.paint(Tissue::brainstem, [&](double x, double y, double z) {
                return z < base && z >= base - bs_len && sq(x - cx) + sq(y - bs_y) <= r_bs * r_bs;
            });
            break;
        }
    }
    return canvas.finish();
}

}  // namespace fetaval

#endif  // FETAVAL_PHANTOM_HPP
