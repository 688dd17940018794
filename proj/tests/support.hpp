// Shared generators and independent oracles for the test suites.
#ifndef RCTD_TESTS_SUPPORT_HPP
#define RCTD_TESTS_SUPPORT_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "rctd/config.hpp"
#include "rctd/geometry.hpp"
#include "rctd/grid.hpp"
#include "rctd/synth.hpp"

namespace testing {

using rctd::CellIndex;
using rctd::EllipseParams;
using rctd::FeatureGrid;
using rctd::GridSpec;
using rctd::MaskGrid;
using rctd::ObjectBox;
using rctd::Rng;
using rctd::Vec2;

inline std::int64_t draw_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(hi - lo + 1));
}

inline ObjectBox<double> random_box(Rng& rng, double bounds = 40.0, double max_speed = 10.0) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = rng.uniform(0.0, max_speed);
    return ObjectBox<double>(Vec2<double>(rng.uniform(-bounds, bounds), rng.uniform(-bounds, bounds)),
                             rng.uniform(-std::numbers::pi, std::numbers::pi), rng.uniform(0.5, 6.0),
                             rng.uniform(0.5, 3.0),
                             Vec2<double>(speed * std::cos(angle), speed * std::sin(angle)));
}

inline EllipseParams<double> random_ellipse(Rng& rng, double bounds, double min_r, double max_r) {
    return rctd::make_ellipse(Vec2<double>(rng.uniform(-bounds, bounds), rng.uniform(-bounds, bounds)),
                              rng.uniform(-std::numbers::pi, std::numbers::pi), rng.uniform(min_r, max_r),
                              rng.uniform(min_r, max_r));
}

inline GridSpec small_grid(std::int64_t h, std::int64_t w, double ox = 0.0, double oy = 0.0, double cs = 1.0) {
    GridSpec g;
    g.height = h;
    g.width = w;
    g.origin_x = ox;
    g.origin_y = oy;
    g.cell_size = cs;
    return g;
}

inline MaskGrid<double> random_mask(Rng& rng, const GridSpec& grid, double zero_fraction = 0.3) {
    MaskGrid<double> m = MaskGrid<double>::zeros(grid);
    for (std::int64_t j = 0; j < grid.height; ++j) {
        for (std::int64_t k = 0; k < grid.width; ++k) {
            m(j, k) = rng.uniform() < zero_fraction ? 0.0 : rng.uniform(0.01, 1.0);
        }
    }
    return m;
}

inline FeatureGrid<double> random_features(Rng& rng, std::int64_t c, std::int64_t h, std::int64_t w,
                                           double lo = -1.0, double hi = 1.0) {
    FeatureGrid<double> f = FeatureGrid<double>::zeros(c, h, w);
    for (std::int64_t i = 0; i < f.data.size(); ++i) f.data.data()[i] = rng.uniform(lo, hi);
    return f;
}

// Elliptical Gaussian written as the quadratic form d^T A d with
// A = R^T diag(1/r1^2, 1/r2^2) R expanded by hand.
inline double oracle_gaussian(double px, double py, double cx, double cy, double theta, double r1, double r2) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double a = 1.0 / (r1 * r1);
    const double b = 1.0 / (r2 * r2);
    const double axx = a * c * c + b * s * s;
    const double ayy = a * s * s + b * c * c;
    const double axy = (b - a) * s * c;
    const double dx = px - cx;
    const double dy = py - cy;
    return std::exp(-0.5 * (axx * dx * dx + 2.0 * axy * dx * dy + ayy * dy * dy));
}

// Unculled per-cell evaluation.
inline std::vector<double> oracle_raster(const EllipseParams<double>& e, const GridSpec& g) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(g.height * g.width));
    for (std::int64_t j = 0; j < g.height; ++j) {
        for (std::int64_t k = 0; k < g.width; ++k) {
            const double x = g.origin_x + static_cast<double>(k) * g.cell_size;
            const double y = g.origin_y + static_cast<double>(j) * g.cell_size;
            out.push_back(oracle_gaussian(x, y, e.center.x(), e.center.y(), e.heading, e.r_major, e.r_minor));
        }
    }
    return out;
}

// Cosine similarity from explicit loops.
inline double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace testing

#endif  // RCTD_TESTS_SUPPORT_HPP
