// config.hpp
#ifndef RCTD_CONFIG_HPP
#define RCTD_CONFIG_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

#include "rctd/geometry.hpp"

namespace rctd {

/// Thrown for malformed input data: bad files, schema violations, shape
/// mismatches between grids.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Metric-to-cell mapping. Cell (j, k) has its center at
/// (origin_x + k * cell_size, origin_y + j * cell_size); j indexes rows (H),
/// k indexes columns (W).
struct GridSpec {
    std::int64_t height = 64;
    std::int64_t width = 64;
    double origin_x = -50.4;
    double origin_y = -50.4;
    double cell_size = 1.6;

    std::int64_t cells() const { return height * width; }
    std::int64_t flat_index(std::int64_t j, std::int64_t k) const { return j * width + k; }

    template <typename Scalar = double>
    Vec2<Scalar> cell_center(std::int64_t j, std::int64_t k) const {
        return Vec2<Scalar>(Scalar(origin_x + static_cast<double>(k) * cell_size),
                            Scalar(origin_y + static_cast<double>(j) * cell_size));
    }

    void validate() const;
    bool operator==(const GridSpec&) const = default;
};

/// All distillation hyperparameters. Numeric defaults are artifact choices.
struct DistillConfig {
    double alpha_l = 8.0;      ///< major-axis radius scale (m)
    double alpha_w = 4.0;      ///< minor-axis radius scale (m)
    double r_max = 51.2;       ///< range that maps to beta = 1 (m)
    double tau = 0.1;          ///< mask threshold, shared by the range-azimuth and temporal masks
    double tau_v = 0.25;       ///< squared-speed gate ((m/s)^2)
    double t_s = 0.5;          ///< trajectory window (s)
    double tau_cls = 0.1;      ///< confidence threshold for relational positions
    std::int64_t k_max = 512;  ///< cap on selected relational positions
    double lambda_ra = 1.0;
    double lambda_t = 1.0;
    double lambda_rd = 1.0;
    bool rakd_squared = false;  ///< use the squared norm in the range-azimuth loss
    GridSpec grid{};

    void validate() const;
    bool operator==(const DistillConfig&) const = default;
};

template <typename Scalar>
AxisRadii<Scalar> compute_rakd_radii(const ObjectBox<Scalar>& box, Scalar beta, const DistillConfig& cfg) {
    return compute_rakd_radii(box, beta, Scalar(cfg.alpha_l), Scalar(cfg.alpha_w));
}

template <typename Scalar>
EllipseParams<Scalar> compute_rakd_ellipse(const ObjectBox<Scalar>& box, const DistillConfig& cfg) {
    return compute_rakd_ellipse(box, Scalar(cfg.alpha_l), Scalar(cfg.alpha_w), Scalar(cfg.r_max));
}

template <typename Scalar>
EllipseParams<Scalar> compute_tkd_ellipse(const ObjectBox<Scalar>& box, const DistillConfig& cfg) {
    return compute_tkd_ellipse(box, Scalar(cfg.t_s), Scalar(cfg.tau_v));
}

}  // namespace rctd

#endif  // RCTD_CONFIG_HPP
