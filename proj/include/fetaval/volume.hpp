#ifndef FETAVAL_VOLUME_HPP
#define FETAVAL_VOLUME_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "labels.hpp"

namespace fetaval {

struct Dims {
    std::int64_t nx = 1, ny = 1, nz = 1;

    constexpr std::size_t voxel_count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    constexpr std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return static_cast<std::size_t>((z * ny + y) * nx + x);
    }
    constexpr bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
    }
    friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

/// Millimeters per voxel along x, y, z.
struct Spacing {
    double sx = 1.0, sy = 1.0, sz = 1.0;

    constexpr double operator[](int axis) const { return axis == 0 ? sx : (axis == 1 ? sy : sz); }
    friend constexpr bool operator==(const Spacing&, const Spacing&) = default;
};

struct Index3 {
    std::int64_t x = 0, y = 0, z = 0;
    friend constexpr bool operator==(const Index3&, const Index3&) = default;
};

/// Half-open voxel box [lo, hi).
struct Box {
    Index3 lo{0, 0, 0};
    Index3 hi{0, 0, 0};

    constexpr bool empty() const { return hi.x <= lo.x || hi.y <= lo.y || hi.z <= lo.z; }
    constexpr Dims dims() const { return {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z}; }

    constexpr void expand(std::int64_t x, std::int64_t y, std::int64_t z) {
        if (empty()) {
            lo = {x, y, z};
            hi = {x + 1, y + 1, z + 1};
            return;
        }
        lo = {std::min(lo.x, x), std::min(lo.y, y), std::min(lo.z, z)};
        hi = {std::max(hi.x, x + 1), std::max(hi.y, y + 1), std::max(hi.z, z + 1)};
    }
    constexpr Box united(const Box& o) const {
        if (empty()) return o;
        if (o.empty()) return *this;
        return {{std::min(lo.x, o.lo.x), std::min(lo.y, o.lo.y), std::min(lo.z, o.lo.z)},
                {std::max(hi.x, o.hi.x), std::max(hi.y, o.hi.y), std::max(hi.z, o.hi.z)}};
    }
    constexpr Box padded(std::int64_t p) const {
        return {{lo.x - p, lo.y - p, lo.z - p}, {hi.x + p, hi.y + p, hi.z + p}};
    }
};

inline bool spacing_close(const Spacing& a, const Spacing& b, double rel = 1e-6) {
    for (int axis = 0; axis < 3; ++axis) {
        double scale = std::max(std::abs(a[axis]), std::abs(b[axis]));
        if (std::abs(a[axis] - b[axis]) > rel * scale) return false;
    }
    return true;
}

inline void validate_grid(const Dims& dims, const Spacing& spacing) {
    if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
        fail(ErrorKind::format, "grid dimensions must be >= 1");
    for (int axis = 0; axis < 3; ++axis) {
        if (!(spacing[axis] > 0.0) || !std::isfinite(spacing[axis]))
            fail(ErrorKind::format, "voxel spacing must be positive and finite");
    }
}

/// Dense multi-class label grid, x fastest. Immutable after construction.
class LabelVolume {
public:
    LabelVolume() = default;

    LabelVolume(Dims dims, Spacing spacing, std::vector<std::uint8_t> voxels, std::string case_id = {})
        : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)), case_id_(std::move(case_id)) {
        validate_grid(dims_, spacing_);
        if (voxels_.size() != dims_.voxel_count())
            fail(ErrorKind::format, "voxel buffer length does not match grid dimensions");
        for (std::uint8_t v : voxels_) {
            if (v >= kLabelCount)
                fail(ErrorKind::alphabet, "label code " + std::to_string(v) + " outside {0..7}");
        }
    }

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    std::span<const std::uint8_t> voxels() const { return voxels_; }
    const std::string& case_id() const { return case_id_; }
    std::uint8_t at(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return voxels_[dims_.index(x, y, z)];
    }

    LabelVolume with_case_id(std::string id) const {
        LabelVolume copy = *this;
        copy.case_id_ = std::move(id);
        return copy;
    }

private:
    Dims dims_{};
    Spacing spacing_{};
    std::vector<std::uint8_t> voxels_ = {0};
    std::string case_id_;
};

/// Boolean grid; `origin` is the position of voxel (0,0,0) in the parent
/// volume's index space, so cropped masks keep their physical placement.
class BinaryMask {
public:
    BinaryMask() = default;

    BinaryMask(Dims dims, Spacing spacing, Index3 origin = {})
        : dims_(dims), spacing_(spacing), origin_(origin), bits_(dims.voxel_count(), 0) {
        validate_grid(dims_, spacing_);
    }

    BinaryMask(Dims dims, Spacing spacing, std::vector<std::uint8_t> bits, Index3 origin = {})
        : dims_(dims), spacing_(spacing), origin_(origin), bits_(std::move(bits)) {
        validate_grid(dims_, spacing_);
        if (bits_.size() != dims_.voxel_count())
            fail(ErrorKind::shape, "mask buffer length does not match grid dimensions");
        for (auto& b : bits_) b = b ? 1 : 0;
    }

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    const Index3& origin() const { return origin_; }
    std::span<const std::uint8_t> bits() const { return bits_; }

    bool at(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return bits_[dims_.index(x, y, z)] != 0;
    }
    /// Out-of-grid reads are background.
    bool get(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return dims_.contains(x, y, z) && bits_[dims_.index(x, y, z)] != 0;
    }
    void set(std::int64_t x, std::int64_t y, std::int64_t z, bool v) {
        bits_[dims_.index(x, y, z)] = v ? 1 : 0;
    }

    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }
    bool empty() const { return std::find(bits_.begin(), bits_.end(), std::uint8_t{1}) == bits_.end(); }

    Box bounding_box() const {
        Box box;
        for (std::int64_t z = 0; z < dims_.nz; ++z)
            for (std::int64_t y = 0; y < dims_.ny; ++y)
                for (std::int64_t x = 0; x < dims_.nx; ++x)
                    if (at(x, y, z)) box.expand(x, y, z);
        return box;
    }

    friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
        return a.dims_ == b.dims_ && a.bits_ == b.bits_;
    }

private:
    Dims dims_{};
    Spacing spacing_{};
    Index3 origin_{};
    std::vector<std::uint8_t> bits_ = {0};
};

/// Per-label view of a label volume. Background is never scored.
inline BinaryMask binary_mask(const LabelVolume& vol, Tissue label) {
    if (!is_scored(label)) fail(ErrorKind::usage, "background (code 0) cannot be masked for scoring");
    const auto c = static_cast<std::uint8_t>(code(label));
    std::vector<std::uint8_t> bits(vol.voxels().size());
    std::transform(vol.voxels().begin(), vol.voxels().end(), bits.begin(),
                   [c](std::uint8_t v) { return static_cast<std::uint8_t>(v == c); });
    return BinaryMask(vol.dims(), vol.spacing(), std::move(bits));
}

/// Mask of `label` restricted to `box` (in volume index space). The box may
/// extend past the grid; those voxels read as background.
inline BinaryMask cropped_mask(const LabelVolume& vol, Tissue label, const Box& box) {
    const Dims d = box.dims();
    BinaryMask mask(d, vol.spacing(), box.lo);
    const auto c = static_cast<std::uint8_t>(code(label));
    const Dims& vd = vol.dims();
    for (std::int64_t z = std::max<std::int64_t>(box.lo.z, 0); z < std::min(box.hi.z, vd.nz); ++z)
        for (std::int64_t y = std::max<std::int64_t>(box.lo.y, 0); y < std::min(box.hi.y, vd.ny); ++y)
            for (std::int64_t x = std::max<std::int64_t>(box.lo.x, 0); x < std::min(box.hi.x, vd.nx); ++x)
                if (vol.at(x, y, z) == c) mask.set(x - box.lo.x, y - box.lo.y, z - box.lo.z, true);
    return mask;
}

inline void require_same_grid(const LabelVolume& a, const LabelVolume& b) {
    if (!(a.dims() == b.dims()))
        fail(ErrorKind::shape, "grid mismatch: dimensions differ between prediction and ground truth");
    if (!spacing_close(a.spacing(), b.spacing()))
        fail(ErrorKind::shape, "grid mismatch: voxel spacing differs between prediction and ground truth");
}

}  // namespace fetaval

#endif  // FETAVAL_VOLUME_HPP
