#ifndef FETAVAL_SURFACE_HPP
#define FETAVAL_SURFACE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "error.hpp"
#include "volume.hpp"

namespace fetaval {

struct Point3 {
    double x = 0, y = 0, z = 0;
};

/// Boundary voxels of a mask. `voxels` are positions in the parent volume's
/// index space; `points` are the same voxel centers in millimeters.
struct SurfacePointSet {
    Spacing spacing;
    std::vector<Index3> voxels;
    std::vector<Point3> points;

    std::size_t count() const { return voxels.size(); }
    bool empty() const { return voxels.empty(); }
};

/// Voxels of the mask with at least one 6-neighbour outside it; the grid
/// boundary counts as outside.
inline SurfacePointSet extract_surface(const BinaryMask& mask) {
    SurfacePointSet s;
    s.spacing = mask.spacing();
    const Dims& d = mask.dims();
    const Index3& o = mask.origin();
    for (std::int64_t z = 0; z < d.nz; ++z) {
        for (std::int64_t y = 0; y < d.ny; ++y) {
            for (std::int64_t x = 0; x < d.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                const bool interior = mask.get(x - 1, y, z) && mask.get(x + 1, y, z) && mask.get(x, y - 1, z) &&
                                      mask.get(x, y + 1, z) && mask.get(x, y, z - 1) && mask.get(x, y, z + 1);
                if (interior) continue;
                const Index3 v{x + o.x, y + o.y, z + o.z};
                s.voxels.push_back(v);
                s.points.push_back({static_cast<double>(v.x) * s.spacing.sx, static_cast<double>(v.y) * s.spacing.sy,
                                    static_cast<double>(v.z) * s.spacing.sz});
            }
        }
    }
    if (s.empty()) fail(ErrorKind::empty_mask, "cannot extract the surface of an empty mask");
    return s;
}

namespace detail {

/// Exact squared distance transform of one line (Felzenszwalb-Huttenlocher
/// lower envelope of parabolas) with sample spacing `w`. `f` holds squared
/// distances (infinity where undefined) and is overwritten in place.
inline void edt_line(double* f, std::size_t stride, std::int64_t n, double w, std::vector<double>& buf_f,
                     std::vector<std::int64_t>& v, std::vector<double>& zb) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    buf_f.resize(static_cast<std::size_t>(n));
    v.resize(static_cast<std::size_t>(n));
    zb.resize(static_cast<std::size_t>(n) + 1);
    bool any = false;
    for (std::int64_t i = 0; i < n; ++i) {
        buf_f[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i) * stride];
        any = any || buf_f[static_cast<std::size_t>(i)] < inf;
    }
    if (!any) return;
    const double w2 = w * w;
    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
        const double fq = buf_f[static_cast<std::size_t>(q)];
        if (fq == inf) continue;
        const double q2 = w2 * static_cast<double>(q) * static_cast<double>(q);
        double s = 0;
        while (k >= 0) {
            const std::int64_t p = v[static_cast<std::size_t>(k)];
            const double p2 = w2 * static_cast<double>(p) * static_cast<double>(p);
            s = ((fq + q2) - (buf_f[static_cast<std::size_t>(p)] + p2)) / (2.0 * w2 * static_cast<double>(q - p));
            if (s <= zb[static_cast<std::size_t>(k)]) --k;
            else break;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        zb[static_cast<std::size_t>(k)] = (k == 0) ? -inf : s;
        zb[static_cast<std::size_t>(k) + 1] = inf;
    }
    std::int64_t j = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        while (zb[static_cast<std::size_t>(j) + 1] < static_cast<double>(q)) ++j;
        const std::int64_t p = v[static_cast<std::size_t>(j)];
        const double d = w * static_cast<double>(q - p);
        f[static_cast<std::size_t>(q) * stride] = d * d + buf_f[static_cast<std::size_t>(p)];
    }
}

/// Squared Euclidean distance (mm^2) from every voxel of `box` to the nearest
/// site. Sites must lie inside the box.
inline std::vector<double> squared_edt(const Box& box, const Spacing& sp, std::span<const Index3> sites) {
    const Dims d = box.dims();
    std::vector<double> f(d.voxel_count(), std::numeric_limits<double>::infinity());
    for (const auto& s : sites) f[d.index(s.x - box.lo.x, s.y - box.lo.y, s.z - box.lo.z)] = 0.0;
    std::vector<double> buf;
    std::vector<std::int64_t> v;
    std::vector<double> zb;
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y) edt_line(&f[d.index(0, y, z)], 1, d.nx, sp.sx, buf, v, zb);
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t x = 0; x < d.nx; ++x)
            edt_line(&f[d.index(x, 0, z)], static_cast<std::size_t>(d.nx), d.ny, sp.sy, buf, v, zb);
    const auto plane = static_cast<std::size_t>(d.nx * d.ny);
    for (std::int64_t y = 0; y < d.ny; ++y)
        for (std::int64_t x = 0; x < d.nx; ++x) edt_line(&f[d.index(x, y, 0)], plane, d.nz, sp.sz, buf, v, zb);
    return f;
}

inline Box voxel_bounds(std::span<const Index3> voxels) {
    Box b;
    for (const auto& v : voxels) b.expand(v.x, v.y, v.z);
    return b;
}

}  // namespace detail

/// For each point of `from`, the Euclidean distance in mm to the nearest
/// point of `to`, in input order.
inline std::vector<double> directed_distances(const SurfacePointSet& from, const SurfacePointSet& to) {
    if (from.empty() || to.empty()) fail(ErrorKind::empty_mask, "directed_distances needs two nonempty surfaces");
    if (!spacing_close(from.spacing, to.spacing, 1e-12))
        fail(ErrorKind::shape, "directed_distances: surfaces have different voxel spacing");
    const Box box = detail::voxel_bounds(from.voxels).united(detail::voxel_bounds(to.voxels));
    const std::vector<double> sq = detail::squared_edt(box, to.spacing, to.voxels);
    const Dims d = box.dims();
    std::vector<double> out;
    out.reserve(from.count());
    for (const auto& v : from.voxels) out.push_back(std::sqrt(sq[d.index(v.x - box.lo.x, v.y - box.lo.y, v.z - box.lo.z)]));
    return out;
}

/// Linear interpolation between order statistics at rank (n-1)*q/100.
inline double percentile(std::vector<double> values, double q) {
    if (values.empty()) fail(ErrorKind::empty_mask, "percentile of an empty list");
    if (!(q > 0.0 && q <= 100.0)) fail(ErrorKind::usage, "percentile must lie in (0, 100]");
    const double pos = static_cast<double>(values.size() - 1) * q / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    if (hi == lo || pos == static_cast<double>(lo)) return a;
    const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + (b - a) * (pos - static_cast<double>(lo));
}

/// Robust Hausdorff distance: the larger of the two directed q-th percentile
/// surface distances.
inline double hausdorff_percentile(const SurfacePointSet& a, const SurfacePointSet& b, double q) {
    const double ab = percentile(directed_distances(a, b), q);
    const double ba = percentile(directed_distances(b, a), q);
    return std::max(ab, ba);
}

inline double hd95(const SurfacePointSet& pred, const SurfacePointSet& gt) {
    return hausdorff_percentile(pred, gt, 95.0);
}

}  // namespace fetaval

#endif  // FETAVAL_SURFACE_HPP
