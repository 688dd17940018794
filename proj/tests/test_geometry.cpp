#include <cmath>
#include <limits>
#include <numbers>

#include <doctest.h>

#include "rctd/config.hpp"
#include "rctd/geometry.hpp"
#include "support.hpp"

using namespace rctd;
using testing::oracle_gaussian;
using testing::random_box;

namespace {

const double kHalfSigma = std::exp(-0.5);

Vec2<double> rotate(const Vec2<double>& p, double phi) {
    return Vec2<double>(std::cos(phi) * p.x() - std::sin(phi) * p.y(), std::sin(phi) * p.x() + std::cos(phi) * p.y());
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("normalize_angle wraps into [-pi, pi)") {
    const double pi = std::numbers::pi;
    CHECK(normalize_angle(0.25) == 0.25);
    CHECK(normalize_angle(-pi) == -pi);
    CHECK(normalize_angle(pi) == doctest::Approx(-pi));
    CHECK(normalize_angle(3.0 * pi) == doctest::Approx(-pi));
    CHECK(normalize_angle(2.0 * pi + 0.5) == doctest::Approx(0.5));
    CHECK(normalize_angle(-2.0 * pi - 0.5) == doctest::Approx(-0.5));
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const double a = normalize_angle(rng.uniform(-100.0, 100.0));
        CHECK(a >= -pi);
        CHECK(a < pi);
        CHECK(normalize_angle(a) == a);
    }
}

TEST_CASE("ObjectBox validates its fields") {
    const Vec2<double> c(1.0, 2.0);
    CHECK_NOTHROW(ObjectBox<double>(c, 0.0, 1e-3, 1e-3));
    CHECK_THROWS_AS(ObjectBox<double>(c, 0.0, 5e-4, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ObjectBox<double>(c, 0.0, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(ObjectBox<double>(c, 0.0, -2.0, 1.0), std::invalid_argument);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ObjectBox<double>(Vec2<double>(nan, 0.0), 0.0, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ObjectBox<double>(c, inf, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ObjectBox<double>(c, 0.0, 1.0, 1.0, Vec2<double>(0.0, nan)), std::invalid_argument);

    const ObjectBox<double> box(c, 3.0 * std::numbers::pi / 2.0, 4.0, 2.0);
    CHECK(box.heading() == doctest::Approx(-std::numbers::pi / 2.0));
}

TEST_CASE("make_ellipse rejects non-positive radii") {
    const Vec2<double> c(0.0, 0.0);
    CHECK_NOTHROW(make_ellipse(c, 0.0, 1.0, 0.5));
    CHECK_THROWS_AS(make_ellipse(c, 0.0, 0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(make_ellipse(c, 0.0, 1.0, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_ellipse(c, 0.0, std::numeric_limits<double>::quiet_NaN(), 1.0), std::invalid_argument);
}

TEST_CASE("rotate_into_box_frame examples") {
    const Vec2<double> p(11.0, 5.0), c(10.0, 5.0);
    const Vec2<double> a = rotate_into_box_frame(p, c, 0.0);
    CHECK(a.x() == 1.0);
    CHECK(a.y() == 0.0);
    const Vec2<double> b = rotate_into_box_frame(p, c, std::numbers::pi / 2.0);
    CHECK(b.x() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(b.y() == doctest::Approx(1.0));
    for (double theta : {-2.0, 0.3, 1.7}) {
        const Vec2<double> z = rotate_into_box_frame(c, c, theta);
        CHECK(z.x() == 0.0);
        CHECK(z.y() == 0.0);
    }
}

TEST_CASE("the major axis maps onto the box-frame x axis") {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double theta = rng.uniform(-3.0, 3.0);
        const Vec2<double> c(rng.uniform(-5, 5), rng.uniform(-5, 5));
        const Vec2<double> local = rotate_into_box_frame<double>(c + 2.5 * major_axis_direction(theta), c, theta);
        CHECK(local.x() == doctest::Approx(2.5));
        CHECK(std::abs(local.y()) < 1e-14);
    }
}

TEST_CASE("compute_rakd_radii examples") {
    const ObjectBox<double> box(Vec2<double>(0, 0), 0.0, 4.0, 2.0);
    for (double alpha : {0.1, 3.0, 8.0, 100.0}) {
        const auto r = compute_rakd_radii(box, 0.0, alpha, alpha);
        CHECK(r.r_major == 4.0);
        CHECK(r.r_minor == 2.0);
    }
    const auto half = compute_rakd_radii(box, 0.5, 8.0, 4.0);
    CHECK(half.r_major == doctest::Approx(4.0 * std::sqrt(2.0)).epsilon(1e-14));
    CHECK(half.r_minor == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-14));
    for (double beta : {0.0, 0.3, 0.9, 0.999}) {
        const auto r = compute_rakd_radii(box, beta, 4.0, 2.0);
        CHECK(r.r_major == 4.0);
        CHECK(r.r_minor == 2.0);
    }
    DistillConfig cfg;
    const auto via_cfg = compute_rakd_radii(box, 0.5, cfg);
    CHECK(via_cfg.r_major == half.r_major);
}

TEST_CASE("compute_rakd_radii rejects beta outside [0, 1) and non-positive alpha") {
    const ObjectBox<double> box(Vec2<double>(0, 0), 0.0, 4.0, 2.0);
    CHECK_THROWS_AS(compute_rakd_radii(box, 1.0, 8.0, 4.0), std::invalid_argument);
    CHECK_THROWS_AS(compute_rakd_radii(box, 1.5, 8.0, 4.0), std::invalid_argument);
    CHECK_THROWS_AS(compute_rakd_radii(box, -0.01, 8.0, 4.0), std::invalid_argument);
    CHECK_THROWS_AS(compute_rakd_radii(box, std::numeric_limits<double>::quiet_NaN(), 8.0, 4.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(compute_rakd_radii(box, 0.5, 0.0, 4.0), std::invalid_argument);
    CHECK_THROWS_AS(compute_rakd_radii(box, 0.5, 8.0, -1.0), std::invalid_argument);
}

TEST_CASE("compute_rakd_radii moves monotonically toward alpha") {
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const double l = rng.uniform(0.5, 12.0);
        const double alpha = rng.uniform(0.5, 12.0);
        const double b1 = rng.uniform(0.0, 0.99);
        const double b2 = rng.uniform(0.0, 0.99);
        if (std::abs(l - alpha) < 1e-6 || std::abs(b1 - b2) < 1e-6) continue;
        const ObjectBox<double> box(Vec2<double>(0, 0), 0.0, l, 1.0);
        const double r1 = compute_rakd_radii(box, b1, alpha, 1.0).r_major;
        const double r2 = compute_rakd_radii(box, b2, alpha, 1.0).r_major;
        const double slope = (r2 - r1) / (b2 - b1);
        if (l < alpha) CHECK(slope > 0.0);
        else CHECK(slope < 0.0);
    }
}

TEST_CASE("normalized_ego_distance examples") {
    CHECK(normalized_ego_distance(Vec2<double>(0, 0), 51.2) == 0.0);
    CHECK(normalized_ego_distance(Vec2<double>(30, 40), 100.0) == 0.5);
    CHECK(normalized_ego_distance(Vec2<double>(300, 400), 100.0) == 0.999);
    CHECK(normalized_ego_distance(Vec2<double>(100, 0), 100.0) == 0.999);
    CHECK_THROWS_AS(normalized_ego_distance(Vec2<double>(1, 0), 0.0), std::invalid_argument);
}

TEST_CASE("eval_elliptical_gaussian examples") {
    const auto e = make_ellipse(Vec2<double>(3.0, -2.0), 0.0, 2.0, 0.5);
    CHECK(eval_elliptical_gaussian(e.center, e) == 1.0);
    CHECK(eval_elliptical_gaussian(Vec2<double>(5.0, -2.0), e) == doctest::Approx(kHalfSigma).epsilon(1e-15));
    CHECK(eval_elliptical_gaussian(Vec2<double>(3.0, -1.5), e) == doctest::Approx(kHalfSigma).epsilon(1e-15));
    const double y = 0.5 * std::sqrt(3.0);
    CHECK(eval_elliptical_gaussian(Vec2<double>(5.0, -2.0 + y), e) == doctest::Approx(std::exp(-0.5 * 4.0)));

    Rng rng(17);
    for (int i = 0; i < 500; ++i) {
        const auto r = testing::random_ellipse(rng, 10.0, 0.2, 5.0);
        const Vec2<double> p(rng.uniform(-15, 15), rng.uniform(-15, 15));
        const double want = oracle_gaussian(p.x(), p.y(), r.center.x(), r.center.y(), r.heading, r.r_major, r.r_minor);
        CHECK(std::abs(eval_elliptical_gaussian(p, r) - want) < 1e-12);
    }
}

TEST_CASE("eval_elliptical_gaussian is invariant under rigid rotation") {
    Rng rng(23);
    double worst = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const auto e = testing::random_ellipse(rng, 50.0, 0.5, 8.0);
        const Vec2<double> p = e.center + Vec2<double>(rng.uniform(-3, 3), rng.uniform(-3, 3)) * e.max_radius();
        const double phi = rng.uniform(-10.0, 10.0);
        // a world rotation by +phi turns the box frame angle by -phi
        const EllipseParams<double> turned{rotate(e.center, phi), e.heading - phi, e.r_major, e.r_minor};
        const double a = eval_elliptical_gaussian(p, e);
        const double b = eval_elliptical_gaussian(rotate(p, phi), turned);
        worst = std::max(worst, std::abs(a - b));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("eval_elliptical_gaussian is point symmetric about its center") {
    Rng rng(29);
    for (int i = 0; i < 500; ++i) {
        auto e = testing::random_ellipse(rng, 20.0, 0.5, 5.0);
        e.heading = 0.0;
        // dyadic coordinates keep p - c exact on both sides
        const auto q = [](double v) { return std::round(v * 64.0) / 64.0; };
        e.center = Vec2<double>(q(e.center.x()), q(e.center.y()));
        const Vec2<double> d(q(rng.uniform(-6, 6)), q(rng.uniform(-6, 6)));
        CHECK(eval_elliptical_gaussian<double>(e.center + d, e) == eval_elliptical_gaussian<double>(e.center - d, e));
        const Vec2<double> flip(e.center.x() - d.x(), e.center.y() + d.y());
        CHECK(eval_elliptical_gaussian<double>(e.center + d, e) ==
              doctest::Approx(eval_elliptical_gaussian(flip, e)).epsilon(1e-14));
    }
}

TEST_CASE("compute_rakd_ellipse keeps the box size at the ego origin") {
    DistillConfig cfg;
    const ObjectBox<double> box(Vec2<double>(0, 0), 0.4, 4.2, 1.9);
    const auto e = compute_rakd_ellipse(box, cfg);
    CHECK(e.r_major == 4.2);
    CHECK(e.r_minor == 1.9);
    CHECK(e.heading == 0.4);
    CHECK(e.center == box.center());

    const ObjectBox<double> far(Vec2<double>(30, 40), 0.4, 4.0, 2.0);
    cfg.r_max = 100.0;
    const auto f = compute_rakd_ellipse(far, cfg);
    CHECK(f.r_major == doctest::Approx(4.0 * std::sqrt(2.0)));
    CHECK(f.r_minor == doctest::Approx(2.0 * std::sqrt(2.0)));
}

TEST_CASE("compute_tkd_ellipse examples") {
    DistillConfig cfg;
    cfg.t_s = 1.0;
    cfg.tau_v = 0.25;
    const ObjectBox<double> moving(Vec2<double>(10, 5), 0.0, 4.0, 2.0, Vec2<double>(2, 0));
    const auto e = compute_tkd_ellipse(moving, cfg);
    CHECK(e.center.x() == 9.0);
    CHECK(e.center.y() == 5.0);
    CHECK(e.r_major == 5.0);
    CHECK(e.r_minor == 2.0);
    CHECK(e.heading == 0.0);

    // squared speed exactly at the gate stays static
    const ObjectBox<double> gated(Vec2<double>(10, 5), 0.3, 4.0, 2.0, Vec2<double>(0.5, 0.0));
    const auto g = compute_tkd_ellipse(gated, cfg);
    CHECK(g.center == gated.center());
    CHECK(g.r_major == 4.0);
    CHECK(g.r_minor == 2.0);

    const ObjectBox<double> still(Vec2<double>(10, 5), 0.3, 4.0, 2.0);
    const auto s = compute_tkd_ellipse(still, cfg);
    CHECK(s.center == still.center());
    CHECK(s.r_major == 4.0);
    CHECK(s.heading == 0.3);

    CHECK_THROWS_AS(compute_tkd_ellipse(moving, 0.0, 0.25), std::invalid_argument);
    CHECK_THROWS_AS(compute_tkd_ellipse(moving, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("the temporal ellipse covers the half-window trajectory") {
    DistillConfig cfg;
    Rng rng(31);
    int moving = 0;
    for (int i = 0; i < 300; ++i) {
        const ObjectBox<double> box0 = random_box(rng);
        // velocity along the length axis, as produced by the scene generator
        const double speed = rng.uniform(0.0, 12.0);
        const ObjectBox<double> box(box0.center(), box0.heading(), box0.length(), box0.width(),
                                    speed * major_axis_direction(box0.heading()));
        if (box.velocity().squaredNorm() <= cfg.tau_v) continue;
        ++moving;
        const auto e = compute_tkd_ellipse(box, cfg);
        for (int m = 0; m <= 50; ++m) {
            const double s = 0.5 * cfg.t_s * m / 50.0;
            const Vec2<double> q = box.center() - s * box.velocity();
            CHECK(eval_elliptical_gaussian(q, e) >= kHalfSigma * (1.0 - 1e-9));
        }
    }
    CHECK(moving > 200);
}

TEST_CASE("geometry kernels are pure") {
    Rng rng(37);
    DistillConfig cfg;
    for (int i = 0; i < 100; ++i) {
        const ObjectBox<double> box = random_box(rng);
        const auto a = compute_rakd_ellipse(box, cfg);
        const auto b = compute_rakd_ellipse(box, cfg);
        CHECK(a.center == b.center);
        CHECK(a.r_major == b.r_major);
        CHECK(a.r_minor == b.r_minor);
        const auto t1 = compute_tkd_ellipse(box, cfg);
        const auto t2 = compute_tkd_ellipse(box, cfg);
        CHECK(t1.center == t2.center);
        CHECK(t1.r_major == t2.r_major);
        const Vec2<double> p(rng.uniform(-40, 40), rng.uniform(-40, 40));
        CHECK(eval_elliptical_gaussian(p, a) == eval_elliptical_gaussian(p, b));
    }
}

TEST_CASE("float instantiation agrees with double") {
    const ObjectBox<float> box(Vec2<float>(12.0f, -7.0f), 0.3f, 4.0f, 2.0f);
    const auto e = compute_rakd_ellipse(box, 8.0f, 4.0f, 51.2f);
    const ObjectBox<double> boxd(Vec2<double>(12.0, -7.0), 0.3f, 4.0, 2.0);
    const auto ed = compute_rakd_ellipse(boxd, 8.0, 4.0, 51.2);
    CHECK(e.r_major == doctest::Approx(ed.r_major).epsilon(1e-6));
    const Vec2<float> p(13.0f, -6.5f);
    CHECK(eval_elliptical_gaussian(p, e) ==
          doctest::Approx(eval_elliptical_gaussian(p.cast<double>().eval(), ed)).epsilon(1e-5));
}

}  // TEST_SUITE
