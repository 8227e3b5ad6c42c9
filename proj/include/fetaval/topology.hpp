#ifndef FETAVAL_TOPOLOGY_HPP
#define FETAVAL_TOPOLOGY_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "labels.hpp"
#include "volume.hpp"

namespace fetaval {

enum class Connectivity : int { six = 6, eighteen = 18, twenty_six = 26 };

inline Connectivity connectivity_from_int(int c) {
    switch (c) {
        case 6: return Connectivity::six;
        case 18: return Connectivity::eighteen;
        case 26: return Connectivity::twenty_six;
        default: fail(ErrorKind::usage, "connectivity must be 6, 18 or 26");
    }
}

/// Background adjacency paired with a foreground adjacency.
inline Connectivity dual(Connectivity fg) {
    return fg == Connectivity::six ? Connectivity::twenty_six : Connectivity::six;
}

struct BettiTriple {
    std::int64_t b0 = 0;  // connected components
    std::int64_t b1 = 0;  // tunnels
    std::int64_t b2 = 0;  // cavities
    friend bool operator==(const BettiTriple&, const BettiTriple&) = default;
};

struct BneTriple {
    double e0 = 0, e1 = 0, e2 = 0;

    double operator[](int k) const { return k == 0 ? e0 : (k == 1 ? e1 : e2); }
    double& operator[](int k) { return k == 0 ? e0 : (k == 1 ? e1 : e2); }
    friend bool operator==(const BneTriple&, const BneTriple&) = default;
};

/// Anatomically expected Betti numbers per tissue: one component and no
/// tunnels or cavities, except cortical GM which has one per hemisphere.
struct ExpectedTopology {
    std::array<BettiTriple, kLabelCount> per_label{};

    static ExpectedTopology fetal_brain() {
        ExpectedTopology e;
        for (Tissue t : kTissues) e.per_label[static_cast<std::size_t>(code(t))] = {1, 0, 0};
        e.per_label[static_cast<std::size_t>(code(Tissue::gm))] = {2, 0, 0};
        return e;
    }
    const BettiTriple& operator[](Tissue t) const { return per_label[static_cast<std::size_t>(code(t))]; }
};

namespace detail {

/// Linear offsets of the neighbourhood in a grid with row length px and
/// plane size px*py.
inline std::vector<std::ptrdiff_t> neighbor_offsets(Connectivity conn, std::int64_t px, std::int64_t py) {
    std::vector<std::ptrdiff_t> out;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (manhattan == 0) continue;
                if (conn == Connectivity::six && manhattan > 1) continue;
                if (conn == Connectivity::eighteen && manhattan > 2) continue;
                out.push_back(static_cast<std::ptrdiff_t>((dz * py + dy) * px + dx));
            }
    return out;
}

/// Grid with a border of sentinel zeros so neighbour reads never leave it.
struct PaddedGrid {
    Dims dims;  // padded extents
    std::int64_t border = 1;
    std::vector<std::uint8_t> cells;
};

/// Copies `mask` into a grid with `border` layers around it. When
/// `complement` is set the stored set is the background of the mask plus
/// every padding layer except the outermost sentinel layer.
inline PaddedGrid pad(const BinaryMask& mask, std::int64_t border, bool complement) {
    const Dims& d = mask.dims();
    PaddedGrid g;
    g.border = border;
    g.dims = {d.nx + 2 * border, d.ny + 2 * border, d.nz + 2 * border};
    g.cells.assign(g.dims.voxel_count(), 0);
    if (complement) {
        // Fill everything inside the outer sentinel shell, then carve the mask.
        for (std::int64_t z = 1; z < g.dims.nz - 1; ++z)
            for (std::int64_t y = 1; y < g.dims.ny - 1; ++y)
                std::fill_n(g.cells.begin() + static_cast<std::ptrdiff_t>(g.dims.index(1, y, z)), g.dims.nx - 2,
                            std::uint8_t{1});
    }
    const auto bits = mask.bits();
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y) {
            const std::size_t src = d.index(0, y, z);
            const std::size_t dst = g.dims.index(border, y + border, z + border);
            for (std::int64_t x = 0; x < d.nx; ++x) {
                const std::uint8_t b = bits[src + static_cast<std::size_t>(x)];
                g.cells[dst + static_cast<std::size_t>(x)] = complement ? static_cast<std::uint8_t>(b ^ 1) : b;
            }
        }
    return g;
}

/// Flood-fills every set cell; returns the number of components and writes
/// 1-based component ids into `labels` (same layout as the grid) when given.
/// Consumes the grid.
inline std::int64_t flood_components(PaddedGrid& g, Connectivity conn, std::vector<std::int32_t>* labels) {
    const auto offs = neighbor_offsets(conn, g.dims.nx, g.dims.ny);
    if (labels) labels->assign(g.cells.size(), 0);
    std::vector<std::size_t> stack;
    std::int64_t count = 0;
    auto& cells = g.cells;
    for (std::size_t seed = 0; seed < cells.size(); ++seed) {
        if (!cells[seed]) continue;
        ++count;
        const auto id = static_cast<std::int32_t>(count);
        cells[seed] = 0;
        stack.push_back(seed);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            if (labels) (*labels)[i] = id;
            for (std::ptrdiff_t o : offs) {
                const std::size_t j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + o);
                if (cells[j]) {
                    cells[j] = 0;
                    stack.push_back(j);
                }
            }
        }
    }
    return count;
}

/// Per 2x2x2 window configuration (bit dx + 2dy + 4dz for the voxel at
/// p - 1 + d), the alternating count of cells owned by lattice point p.
/// Closed complex: a cell is present when any incident voxel is set.
/// Dual complex: cells on voxel centers, present when all their voxels are.
inline const std::array<int, 256>& window_euler_table(bool closed) {
    static const auto build = [](bool closed_complex) {
        std::array<int, 256> lut{};
        for (int c = 0; c < 256; ++c) {
            auto bit = [c](int dx, int dy, int dz) { return (c >> (dx + 2 * dy + 4 * dz)) & 1; };
            int chi = 0;
            for (int mask = 0; mask < 8; ++mask) {
                // closed: axes in `mask` are the cell's extent directions; the
                // voxels incident to it have coordinate 1 on those axes and
                // range over {0,1} on the others.
                // dual: axes in `mask` are the directions the cell spans; its
                // voxels range over {0,1} on those axes and sit at 1 elsewhere.
                const int dim = std::popcount(static_cast<unsigned>(mask));
                bool any = false, all = true;
                for (int v = 0; v < 8; ++v) {
                    const int dx = v & 1, dy = (v >> 1) & 1, dz = (v >> 2) & 1;
                    const int d[3] = {dx, dy, dz};
                    bool incident = true;
                    for (int a = 0; a < 3; ++a) {
                        const bool on_axis = (mask >> a) & 1;
                        if (closed_complex ? (on_axis && d[a] != 1) : (!on_axis && d[a] != 1)) incident = false;
                    }
                    if (!incident) continue;
                    any = any || bit(dx, dy, dz);
                    all = all && bit(dx, dy, dz);
                }
                const bool present = closed_complex ? any : all;
                if (present) chi += (dim % 2 == 0) ? 1 : -1;
            }
            lut[static_cast<std::size_t>(c)] = chi;
        }
        return lut;
    };
    static const std::array<int, 256> closed_lut = build(true);
    static const std::array<int, 256> dual_lut = build(false);
    return closed ? closed_lut : dual_lut;
}

inline std::int64_t window_euler(const BinaryMask& mask, bool closed) {
    const PaddedGrid g = pad(mask, 1, false);
    const auto& lut = window_euler_table(closed);
    const std::int64_t px = g.dims.nx, py = g.dims.ny;
    const std::ptrdiff_t ox = 1, oy = px, oz = px * py;
    const std::uint8_t* c = g.cells.data();
    std::int64_t chi = 0;
    for (std::int64_t z = 1; z < g.dims.nz; ++z)
        for (std::int64_t y = 1; y < g.dims.ny; ++y) {
            std::ptrdiff_t i = static_cast<std::ptrdiff_t>(g.dims.index(1, y, z));
            for (std::int64_t x = 1; x < g.dims.nx; ++x, ++i) {
                const int cfg = c[i - ox - oy - oz] | (c[i - oy - oz] << 1) | (c[i - ox - oz] << 2) |
                                (c[i - oz] << 3) | (c[i - ox - oy] << 4) | (c[i - oy] << 5) | (c[i - ox] << 6) |
                                (c[i] << 7);
                chi += lut[static_cast<std::size_t>(cfg)];
            }
        }
    return chi;
}

inline BinaryMask crop_to_content(const BinaryMask& mask) {
    const Box box = mask.bounding_box();
    if (box.empty()) return BinaryMask(Dims{1, 1, 1}, mask.spacing());
    if (box.dims() == mask.dims()) return mask;
    const Dims d = box.dims();
    BinaryMask out(d, mask.spacing(),
                   Index3{mask.origin().x + box.lo.x, mask.origin().y + box.lo.y, mask.origin().z + box.lo.z});
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x)
                if (mask.at(x + box.lo.x, y + box.lo.y, z + box.lo.z)) out.set(x, y, z, true);
    return out;
}

}  // namespace detail

struct ComponentLabeling {
    std::int64_t count = 0;
    std::vector<std::int32_t> labels;  // mask layout; 0 background, 1..count
};

inline ComponentLabeling connected_components(const BinaryMask& mask, Connectivity conn = Connectivity::twenty_six) {
    detail::PaddedGrid g = detail::pad(mask, 1, false);
    std::vector<std::int32_t> padded_labels;
    ComponentLabeling out;
    out.count = detail::flood_components(g, conn, &padded_labels);
    const Dims& d = mask.dims();
    out.labels.assign(d.voxel_count(), 0);
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x)
                out.labels[d.index(x, y, z)] = padded_labels[g.dims.index(x + 1, y + 1, z + 1)];
    return out;
}

inline std::int64_t count_components(const BinaryMask& mask, Connectivity conn = Connectivity::twenty_six) {
    detail::PaddedGrid g = detail::pad(mask, 1, false);
    return detail::flood_components(g, conn, nullptr);
}

/// Background components of the mask after padding it with one background
/// layer, so all outside background is a single component.
inline std::int64_t count_complement_components(const BinaryMask& mask, Connectivity conn) {
    detail::PaddedGrid g = detail::pad(mask, 2, true);
    return detail::flood_components(g, conn, nullptr);
}

/// V - E + F - C of the closed cubical complex spanned by the foreground
/// voxels (shared vertices, edges and faces counted once).
inline std::int64_t euler_characteristic(const BinaryMask& mask) { return detail::window_euler(mask, true); }

/// Euler characteristic of the complex on voxel centers (voxels, face-adjacent
/// pairs, full 2x2 squares, full 2x2x2 blocks); matches 6-connected
/// foreground topology.
inline std::int64_t euler_characteristic_dual(const BinaryMask& mask) { return detail::window_euler(mask, false); }

/// b0 from foreground components, b2 from enclosed background components,
/// b1 from the Euler-Poincare identity. Foreground adjacency is 26 (default)
/// or 6; the background always uses the dual adjacency.
inline BettiTriple betti_numbers(const BinaryMask& mask, Connectivity fg = Connectivity::twenty_six) {
    if (fg == Connectivity::eighteen)
        fail(ErrorKind::usage, "betti_numbers supports foreground connectivity 26 or 6");
    const BinaryMask m = detail::crop_to_content(mask);
    if (m.empty()) return {0, 0, 0};
    BettiTriple b;
    b.b0 = count_components(m, fg);
    b.b2 = count_complement_components(m, dual(fg)) - 1;
    const std::int64_t chi = fg == Connectivity::twenty_six ? euler_characteristic(m) : euler_characteristic_dual(m);
    b.b1 = b.b0 + b.b2 - chi;
    if (b.b1 < 0 || b.b2 < 0)
        fail(ErrorKind::topology, "inconsistent Betti numbers (b0=" + std::to_string(b.b0) + ", b2=" +
                                      std::to_string(b.b2) + ", chi=" + std::to_string(chi) + ")");
    return b;
}

inline BneTriple betti_number_error(const BettiTriple& pred, Tissue tissue,
                                    const ExpectedTopology& expected = ExpectedTopology::fetal_brain()) {
    if (!is_scored(tissue)) fail(ErrorKind::usage, "betti_number_error: background has no expected topology");
    const BettiTriple& e = expected[tissue];
    return {static_cast<double>(std::llabs(e.b0 - pred.b0)), static_cast<double>(std::llabs(e.b1 - pred.b1)),
            static_cast<double>(std::llabs(e.b2 - pred.b2))};
}

}  // namespace fetaval

#endif  // FETAVAL_TOPOLOGY_HPP
