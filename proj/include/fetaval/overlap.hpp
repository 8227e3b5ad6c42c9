#ifndef FETAVAL_OVERLAP_HPP
#define FETAVAL_OVERLAP_HPP

#include <cstdint>
#include <cstdlib>

#include "error.hpp"
#include "volume.hpp"

namespace fetaval {

struct OverlapCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn_ = 0;

    std::int64_t prediction_size() const { return tp + fp; }
    std::int64_t truth_size() const { return tp + fn_; }
    bool both_empty() const { return tp == 0 && fp == 0 && fn_ == 0; }

    friend bool operator==(const OverlapCounts&, const OverlapCounts&) = default;
};

inline OverlapCounts overlap_counts(const BinaryMask& pred, const BinaryMask& gt) {
    if (!(pred.dims() == gt.dims())) fail(ErrorKind::shape, "overlap_counts: mask dimensions differ");
    OverlapCounts c;
    const auto p = pred.bits();
    const auto g = gt.bits();
    for (std::size_t i = 0; i < p.size(); ++i) {
        c.tp += p[i] & g[i];
        c.fp += p[i] & (g[i] ^ 1);
        c.fn_ += (p[i] ^ 1) & g[i];
    }
    return c;
}

/// 2TP / (2TP + FP + FN); 1 when both masks are empty.
inline double dice(const OverlapCounts& c) {
    const std::int64_t denom = 2 * c.tp + c.fp + c.fn_;
    if (denom == 0) return 1.0;
    return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

/// Volume similarity 1 - |FN - FP| / (2TP + FP + FN); 1 when both are empty.
inline double volume_similarity(const OverlapCounts& c) {
    const std::int64_t denom = 2 * c.tp + c.fp + c.fn_;
    if (denom == 0) return 1.0;
    return 1.0 - static_cast<double>(std::llabs(c.fn_ - c.fp)) / static_cast<double>(denom);
}

}  // namespace fetaval

#endif  // FETAVAL_OVERLAP_HPP
