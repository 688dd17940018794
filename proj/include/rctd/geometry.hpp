// geometry.hpp
//
// Closed-form scalar kernels on the BEV plane: box-frame rotation, the
// range-dependent ellipse radii, the elliptical Gaussian, and the
// motion-shifted temporal ellipse.
//
// Heading convention: a box with heading theta maps world offsets d into its
// frame as R(theta) * d with R = [[cos, -sin], [sin, cos]]. Under this
// convention the major (length) axis points along (cos theta, -sin theta) in
// the world frame; see major_axis_direction().
#ifndef RCTD_GEOMETRY_HPP
#define RCTD_GEOMETRY_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>

namespace rctd {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

/// Wraps an angle into [-pi, pi).
template <typename Scalar>
Scalar normalize_angle(Scalar angle) {
    if (angle >= -std::numbers::pi_v<Scalar> && angle < std::numbers::pi_v<Scalar>) return angle;
    const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
    Scalar a = std::fmod(angle + std::numbers::pi_v<Scalar>, two_pi);
    if (a < Scalar(0)) a += two_pi;
    a -= std::numbers::pi_v<Scalar>;
    // fmod rounding can land exactly on +pi
    if (a >= std::numbers::pi_v<Scalar>) a -= two_pi;
    return a;
}

/// Smallest box dimension accepted, in meters. The radius scaling divides by
/// the box length and width.
inline constexpr double kMinBoxDimension = 1e-3;

/// A ground-truth object projected onto the BEV plane.
template <typename Scalar>
class ObjectBox {
public:
    ObjectBox(const Vec2<Scalar>& center, Scalar heading, Scalar length, Scalar width,
              const Vec2<Scalar>& velocity = Vec2<Scalar>::Zero())
        : center_(center), heading_(heading), length_(length), width_(width), velocity_(velocity) {
        if (!center.allFinite() || !velocity.allFinite() || !std::isfinite(heading) ||
            !std::isfinite(length) || !std::isfinite(width)) {
            throw std::invalid_argument("ObjectBox: non-finite field");
        }
        if (length < Scalar(kMinBoxDimension) || width < Scalar(kMinBoxDimension)) {
            throw std::invalid_argument("ObjectBox: length and width must be >= 1e-3 m");
        }
        heading_ = normalize_angle(heading);
    }

    const Vec2<Scalar>& center() const { return center_; }
    Scalar heading() const { return heading_; }
    Scalar length() const { return length_; }
    Scalar width() const { return width_; }
    const Vec2<Scalar>& velocity() const { return velocity_; }

    bool operator==(const ObjectBox& other) const {
        return center_ == other.center_ && heading_ == other.heading_ && length_ == other.length_ &&
               width_ == other.width_ && velocity_ == other.velocity_;
    }

private:
    Vec2<Scalar> center_;
    Scalar heading_;
    Scalar length_;
    Scalar width_;
    Vec2<Scalar> velocity_;
};

/// Oriented ellipse; r_major runs along the box-frame x' axis.
template <typename Scalar>
struct EllipseParams {
    Vec2<Scalar> center;
    Scalar heading;
    Scalar r_major;
    Scalar r_minor;

    Scalar max_radius() const { return std::max(r_major, r_minor); }
};

template <typename Scalar>
EllipseParams<Scalar> make_ellipse(const Vec2<Scalar>& center, Scalar heading, Scalar r_major,
                                   Scalar r_minor) {
    if (!(r_major > Scalar(0)) || !(r_minor > Scalar(0)) || !std::isfinite(r_major) ||
        !std::isfinite(r_minor)) {
        throw std::invalid_argument("EllipseParams: radii must be positive and finite");
    }
    return {center, heading, r_major, r_minor};
}

/// World-frame unit vector of the box length axis.
template <typename Scalar>
Vec2<Scalar> major_axis_direction(Scalar heading) {
    return Vec2<Scalar>(std::cos(heading), -std::sin(heading));
}

template <typename Scalar>
Vec2<Scalar> rotate_into_box_frame(const Vec2<Scalar>& point, const Vec2<Scalar>& center,
                                   Scalar heading) {
    const Scalar c = std::cos(heading);
    const Scalar s = std::sin(heading);
    const Scalar dx = point.x() - center.x();
    const Scalar dy = point.y() - center.y();
    return Vec2<Scalar>(c * dx - s * dy, s * dx + c * dy);
}

/// Range normalization in [0, 0.999]: distance from the ego origin over r_max.
inline constexpr double kBetaCap = 0.999;

template <typename Scalar>
Scalar normalized_ego_distance(const Vec2<Scalar>& center, Scalar r_max) {
    if (!(r_max > Scalar(0))) throw std::invalid_argument("normalized_ego_distance: r_max must be > 0");
    return std::min(center.norm() / r_max, Scalar(kBetaCap));
}

template <typename Scalar>
struct AxisRadii {
    Scalar r_major;
    Scalar r_minor;
};

/// Range-azimuth radii: r = size * (alpha / size)^beta on each axis, so the
/// radius moves from the box size toward alpha as the object gets farther.
template <typename Scalar>
AxisRadii<Scalar> compute_rakd_radii(const ObjectBox<Scalar>& box, Scalar beta, Scalar alpha_l,
                                     Scalar alpha_w) {
    if (!(beta >= Scalar(0) && beta < Scalar(1))) {
        throw std::invalid_argument("compute_rakd_radii: beta must lie in [0, 1)");
    }
    if (!(alpha_l > Scalar(0)) || !(alpha_w > Scalar(0))) {
        throw std::invalid_argument("compute_rakd_radii: alpha_l and alpha_w must be > 0");
    }
    const Scalar l = box.length();
    const Scalar w = box.width();
    return {l * std::pow(alpha_l / l, beta), w * std::pow(alpha_w / w, beta)};
}

template <typename Scalar>
Scalar eval_elliptical_gaussian(const Vec2<Scalar>& point, const EllipseParams<Scalar>& ellipse) {
    const Vec2<Scalar> local = rotate_into_box_frame(point, ellipse.center, ellipse.heading);
    const Scalar u = local.x() / ellipse.r_major;
    const Scalar v = local.y() / ellipse.r_minor;
    return std::exp(Scalar(-0.5) * (u * u + v * v));
}

template <typename Scalar>
EllipseParams<Scalar> compute_rakd_ellipse(const ObjectBox<Scalar>& box, Scalar alpha_l, Scalar alpha_w,
                                           Scalar r_max) {
    const Scalar beta = normalized_ego_distance(box.center(), r_max);
    const AxisRadii<Scalar> r = compute_rakd_radii(box, beta, alpha_l, alpha_w);
    return {box.center(), box.heading(), r.r_major, r.r_minor};
}

/// Trajectory ellipse. Objects whose squared speed exceeds speed_sq_gate are
/// re-centered half a window back along their motion and stretched along the
/// major axis by the shift; slower objects keep their box center and size.
template <typename Scalar>
EllipseParams<Scalar> compute_tkd_ellipse(const ObjectBox<Scalar>& box, Scalar window_s,
                                          Scalar speed_sq_gate) {
    if (!(window_s > Scalar(0))) throw std::invalid_argument("compute_tkd_ellipse: t_s must be > 0");
    if (!(speed_sq_gate >= Scalar(0))) {
        throw std::invalid_argument("compute_tkd_ellipse: tau_v must be >= 0");
    }
    const Vec2<Scalar>& p = box.center();
    Vec2<Scalar> shifted = p;
    if (box.velocity().squaredNorm() > speed_sq_gate) {
        shifted = p - (window_s / Scalar(2)) * box.velocity();
    }
    const Scalar shift = (shifted - p).norm();
    return {shifted, box.heading(), box.length() + shift, box.width()};
}

}  // namespace rctd

#endif  // RCTD_GEOMETRY_HPP
