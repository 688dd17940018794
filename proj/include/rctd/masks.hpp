// masks.hpp
//
// Distillation masks: per-object elliptical Gaussians sampled at cell
// centers, merged by pointwise maximum and thresholded.
#ifndef RCTD_MASKS_HPP
#define RCTD_MASKS_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "rctd/config.hpp"
#include "rctd/geometry.hpp"
#include "rctd/grid.hpp"

namespace rctd {

/// Cells farther than this many radii (of the larger axis) from an ellipse
/// center are left at zero. exp(-0.5 * 6^2) ~ 1.5e-8.
inline constexpr double kCullSigmas = 6.0;

namespace detail {

struct CellRange {
    std::int64_t begin;
    std::int64_t end;  // exclusive
};

// Cells whose centers lie within [lo, hi] along one axis.
inline CellRange cells_within(double lo, double hi, double origin, double cell_size, std::int64_t n) {
    const double first = std::ceil((lo - origin) / cell_size);
    const double last = std::floor((hi - origin) / cell_size);
    const std::int64_t b = static_cast<std::int64_t>(std::clamp(first, 0.0, static_cast<double>(n)));
    const std::int64_t e = static_cast<std::int64_t>(std::clamp(last + 1.0, 0.0, static_cast<double>(n)));
    return {b, std::max(b, e)};
}

// Writes max(current, gaussian) over the culling window of one ellipse.
template <typename Scalar>
void max_splat(const EllipseParams<Scalar>& ellipse, const GridSpec& grid, RowMajorMatrix<Scalar>& out) {
    const double reach = kCullSigmas * static_cast<double>(ellipse.max_radius());
    const double cx = static_cast<double>(ellipse.center.x());
    const double cy = static_cast<double>(ellipse.center.y());
    const CellRange rows = cells_within(cy - reach, cy + reach, grid.origin_y, grid.cell_size, grid.height);
    const CellRange cols = cells_within(cx - reach, cx + reach, grid.origin_x, grid.cell_size, grid.width);
#pragma omp parallel for schedule(static) if ((rows.end - rows.begin) * (cols.end - cols.begin) > 16384)
    for (std::int64_t j = rows.begin; j < rows.end; ++j) {
        for (std::int64_t k = cols.begin; k < cols.end; ++k) {
            const Scalar v = eval_elliptical_gaussian(grid.cell_center<Scalar>(j, k), ellipse);
            if (v > out(j, k)) out(j, k) = v;
        }
    }
}

}  // namespace detail

template <typename Scalar>
MaskGrid<Scalar> rasterize_object_mask(const EllipseParams<Scalar>& ellipse, const GridSpec& grid) {
    MaskGrid<Scalar> mask = MaskGrid<Scalar>::zeros(grid);
    detail::max_splat(ellipse, grid, mask.values);
    return mask;
}

template <typename Scalar>
MaskGrid<Scalar> merge_max(std::span<const MaskGrid<Scalar>> masks) {
    if (masks.empty()) throw std::invalid_argument("merge_max: no masks to merge");
    MaskGrid<Scalar> out = masks.front();
    for (const auto& m : masks.subspan(1)) {
        if (!(m.grid == out.grid)) throw DataError("merge_max: masks live on different grids");
        out.values = out.values.cwiseMax(m.values);
    }
    return out;
}

/// Keeps values strictly above tau; everything else becomes zero.
template <typename Scalar>
MaskGrid<Scalar> threshold_mask(const MaskGrid<Scalar>& merged, Scalar tau) {
    MaskGrid<Scalar> out = merged;
    out.values = (merged.values.array() > tau).select(merged.values, Scalar(0));
    return out;
}

/// Range-azimuth mask: range-scaled ellipse per box, max-merged, thresholded at cfg.tau.
template <typename Scalar>
MaskGrid<Scalar> build_rakd_mask(std::span<const ObjectBox<Scalar>> boxes, const GridSpec& grid,
                                 const DistillConfig& cfg) {
    MaskGrid<Scalar> merged = MaskGrid<Scalar>::zeros(grid);
    for (const auto& box : boxes) detail::max_splat(compute_rakd_ellipse(box, cfg), grid, merged.values);
    return threshold_mask(merged, Scalar(cfg.tau));
}

/// Temporal mask: trajectory ellipse per box, max-merged, thresholded at cfg.tau.
template <typename Scalar>
MaskGrid<Scalar> build_tkd_mask(std::span<const ObjectBox<Scalar>> boxes, const GridSpec& grid,
                                const DistillConfig& cfg) {
    MaskGrid<Scalar> merged = MaskGrid<Scalar>::zeros(grid);
    for (const auto& box : boxes) detail::max_splat(compute_tkd_ellipse(box, cfg), grid, merged.values);
    return threshold_mask(merged, Scalar(cfg.tau));
}

}  // namespace rctd

#endif  // RCTD_MASKS_HPP
