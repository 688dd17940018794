#include "rctd/config.hpp"

#include <cmath>

namespace rctd {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void GridSpec::validate() const {
    require(height >= 1 && width >= 1, "GridSpec: height and width must be >= 1");
    require(std::isfinite(cell_size) && cell_size > 0.0, "GridSpec: cell_size must be > 0");
    require(std::isfinite(origin_x) && std::isfinite(origin_y), "GridSpec: origin must be finite");
}

void DistillConfig::validate() const {
    require(alpha_l > 0.0 && alpha_w > 0.0, "DistillConfig: alpha_l and alpha_w must be > 0");
    require(r_max > 0.0, "DistillConfig: r_max must be > 0");
    require(tau >= 0.0 && tau < 1.0, "DistillConfig: tau must lie in [0, 1)");
    require(tau_cls >= 0.0 && tau_cls < 1.0, "DistillConfig: tau_cls must lie in [0, 1)");
    require(tau_v >= 0.0, "DistillConfig: tau_v must be >= 0");
    require(t_s > 0.0, "DistillConfig: t_s must be > 0");
    require(k_max >= 1, "DistillConfig: k_max must be >= 1");
    require(lambda_ra >= 0.0 && lambda_t >= 0.0 && lambda_rd >= 0.0,
            "DistillConfig: loss weights must be >= 0");
    grid.validate();
}

}  // namespace rctd
