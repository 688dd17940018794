#include "rctd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rctd {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

void UncertaintyModel::validate() const {
    if (!(range_sigma >= 0.0) || !(azimuth_sigma >= 0.0) || !(noise_sigma >= 0.0)) {
        throw std::invalid_argument("UncertaintyModel: sigmas must be >= 0");
    }
}

SceneFrame generate_scene(std::uint64_t seed, std::int64_t n_objects, double bounds, SpeedRange speeds) {
    if (n_objects < 0) throw std::invalid_argument("generate_scene: n_objects must be >= 0");
    if (!(bounds > 0.0)) throw std::invalid_argument("generate_scene: bounds must be > 0");
    if (!(speeds.min >= 0.0) || !(speeds.max >= speeds.min)) {
        throw std::invalid_argument("generate_scene: invalid speed range");
    }
    Rng rng(seed);
    SceneFrame frame;
    frame.boxes.reserve(static_cast<std::size_t>(n_objects));
    for (std::int64_t i = 0; i < n_objects; ++i) {
        // fixed draw count per object keeps the stream aligned
        const double cx = rng.uniform(-bounds, bounds);
        const double cy = rng.uniform(-bounds, bounds);
        const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
        const double length = rng.uniform(3.5, 5.0);
        const double width = rng.uniform(1.6, 2.2);
        const bool moving = rng.uniform() < 0.5;
        const double speed = rng.uniform(speeds.min, speeds.max);
        const Vec2<double> velocity = moving ? Vec2<double>(speed * major_axis_direction(heading))
                                             : Vec2<double>::Zero();
        frame.boxes.emplace_back(Vec2<double>(cx, cy), heading, length, width, velocity);
    }
    return frame;
}

std::vector<SceneFrame> propagate_scene(const SceneFrame& frame, double dt, std::int64_t n_frames) {
    if (!(dt > 0.0)) throw std::invalid_argument("propagate_scene: dt must be > 0");
    if (n_frames < 1) throw std::invalid_argument("propagate_scene: n_frames must be >= 1");
    std::vector<SceneFrame> frames(static_cast<std::size_t>(n_frames));
    for (std::int64_t m = 0; m < n_frames; ++m) {
        SceneFrame& out = frames[static_cast<std::size_t>(n_frames - 1 - m)];
        if (m == 0) {
            out = frame;
            continue;
        }
        const double back = static_cast<double>(m) * dt;
        out.timestamp = frame.timestamp - back;
        out.boxes.reserve(frame.boxes.size());
        for (const auto& b : frame.boxes) {
            out.boxes.emplace_back(Vec2<double>(b.center() - back * b.velocity()), b.heading(), b.length(),
                                   b.width(), b.velocity());
        }
    }
    return frames;
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct BumpShape {
    Vec2<double> center;
    Vec2<double> along;  // unit vector along the ego ray
    double sigma_along;
    double sigma_across;
};

double widen(double base, double extra) { return extra == 0.0 ? base : std::hypot(base, extra); }

BumpShape bump_shape(const ObjectBox<double>& box, double cell_size, const UncertaintyModel& model) {
    const Vec2<double>& p = box.center();
    const double range = p.norm();
    const Vec2<double> along = range > 0.0 ? Vec2<double>(p / range) : Vec2<double>(1.0, 0.0);
    return {p, along, widen(cell_size, model.range_sigma), widen(cell_size, model.azimuth_sigma * range)};
}

double bump_value(const BumpShape& s, const Vec2<double>& x) {
    const Vec2<double> d = x - s.center;
    const double a = (d.x() * s.along.x() + d.y() * s.along.y()) / s.sigma_along;
    const double c = (-d.x() * s.along.y() + d.y() * s.along.x()) / s.sigma_across;
    return std::exp(-0.5 * (a * a + c * c));
}

// Calls fn(flat_index, value) for every cell within 8 sigma of the bump.
template <typename Fn>
void for_each_bump_cell(const BumpShape& s, const GridSpec& grid, Fn&& fn) {
    const double reach = 8.0 * std::max(s.sigma_along, s.sigma_across);
    const auto lo_j = static_cast<std::int64_t>(std::max(0.0, std::ceil((s.center.y() - reach - grid.origin_y) / grid.cell_size)));
    const auto hi_j = static_cast<std::int64_t>(std::min(static_cast<double>(grid.height - 1),
                                                         std::floor((s.center.y() + reach - grid.origin_y) / grid.cell_size)));
    const auto lo_k = static_cast<std::int64_t>(std::max(0.0, std::ceil((s.center.x() - reach - grid.origin_x) / grid.cell_size)));
    const auto hi_k = static_cast<std::int64_t>(std::min(static_cast<double>(grid.width - 1),
                                                         std::floor((s.center.x() + reach - grid.origin_x) / grid.cell_size)));
    for (std::int64_t j = lo_j; j <= hi_j; ++j) {
        for (std::int64_t k = lo_k; k <= hi_k; ++k) {
            fn(grid.flat_index(j, k), bump_value(s, grid.cell_center(j, k)));
        }
    }
}

FeatureGrid<double> render(const SceneFrame& frame, const GridSpec& grid, std::int64_t channels,
                           const UncertaintyModel& model, FeatureSource source) {
    grid.validate();
    model.validate();
    auto out = FeatureGrid<double>::zeros(channels, grid.height, grid.width, FeatureLevel::low, source);
    for (std::size_t i = 0; i < frame.boxes.size(); ++i) {
        const Vector<double> pattern = channel_pattern(static_cast<std::int64_t>(i), channels);
        for_each_bump_cell(bump_shape(frame.boxes[i], grid.cell_size, model), grid,
                           [&](std::int64_t cell, double v) { out.data.col(cell) += v * pattern; });
    }
    return out;
}

}  // namespace

Vector<double> channel_pattern(std::int64_t object_index, std::int64_t channels) {
    if (channels < 1) throw std::invalid_argument("channel_pattern: channels must be >= 1");
    Vector<double> p(channels);
    const std::int64_t peak = object_index % channels;
    for (std::int64_t c = 0; c < channels; ++c) {
        if (c == peak) {
            p(c) = 1.0;
        } else {
            const std::uint64_t h = mix64(static_cast<std::uint64_t>(object_index) * 1000003ULL +
                                          static_cast<std::uint64_t>(c));
            p(c) = 0.5 * static_cast<double>(h >> 11) * 0x1.0p-53;
        }
    }
    return p;
}

FeatureGrid<double> render_teacher_features(const SceneFrame& frame, const GridSpec& grid, std::int64_t channels) {
    return render(frame, grid, channels, UncertaintyModel{}, FeatureSource::teacher);
}

FeatureGrid<double> render_student_features(const SceneFrame& frame, const GridSpec& grid, std::int64_t channels,
                                            const UncertaintyModel& model, std::uint64_t seed) {
    FeatureGrid<double> out = render(frame, grid, channels, model, FeatureSource::student);
    if (model.noise_sigma > 0.0) {
        Rng rng(seed);
        // column-major walk: channel fastest within each cell
        for (std::int64_t i = 0; i < out.data.size(); ++i) out.data.data()[i] += model.noise_sigma * rng.normal();
    }
    return out;
}

FeatureGrid<double> render_class_scores(const SceneFrame& frame, const GridSpec& grid, std::int64_t num_classes,
                                        const UncertaintyModel& model) {
    grid.validate();
    model.validate();
    auto out = FeatureGrid<double>::zeros(num_classes, grid.height, grid.width, FeatureLevel::high,
                                          FeatureSource::student);
    for (std::size_t i = 0; i < frame.boxes.size(); ++i) {
        const std::int64_t cls = static_cast<std::int64_t>(i) % num_classes;
        for_each_bump_cell(bump_shape(frame.boxes[i], grid.cell_size, model), grid,
                           [&](std::int64_t cell, double v) { out.data(cls, cell) = std::max(out.data(cls, cell), v); });
    }
    return out;
}

Matrix<double> box_blur(const Matrix<double>& data, std::int64_t height, std::int64_t width, std::int64_t radius) {
    if (radius < 0) throw std::invalid_argument("box_blur: radius must be >= 0");
    if (data.cols() != height * width) throw DataError("box_blur: data does not match the grid size");
    if (radius == 0) return data;
    const double inv_area = 1.0 / static_cast<double>((2 * radius + 1) * (2 * radius + 1));
    Matrix<double> out = Matrix<double>::Zero(data.rows(), data.cols());
    for (std::int64_t j = 0; j < height; ++j) {
        for (std::int64_t k = 0; k < width; ++k) {
            auto dst = out.col(j * width + k);
            for (std::int64_t dj = -radius; dj <= radius; ++dj) {
                const std::int64_t jj = j + dj;
                if (jj < 0 || jj >= height) continue;
                for (std::int64_t dk = -radius; dk <= radius; ++dk) {
                    const std::int64_t kk = k + dk;
                    if (kk < 0 || kk >= width) continue;
                    dst += data.col(jj * width + kk);
                }
            }
            dst *= inv_area;
        }
    }
    return out;
}

FeatureGrid<double> align_history(std::span<const FeatureGrid<double>> history, std::int64_t kernel_radius) {
    if (history.empty()) throw std::invalid_argument("align_history: empty history");
    const FeatureGrid<double>& first = history.front();
    Matrix<double> sum = first.data;
    for (const auto& g : history.subspan(1)) {
        require_same_shape(first, g, "align_history");
        sum += g.data;
    }
    FeatureGrid<double> out{first.height, first.width, Matrix<double>{}, first.level, FeatureSource::student_aligned};
    out.data = box_blur(sum / static_cast<double>(history.size()), first.height, first.width, kernel_radius);
    return out;
}

Matrix<double> align_history_backward(const Matrix<double>& grad_aligned, std::int64_t height, std::int64_t width,
                                      std::int64_t n_frames, std::int64_t kernel_radius) {
    if (n_frames < 1) throw std::invalid_argument("align_history_backward: n_frames must be >= 1");
    return box_blur(grad_aligned, height, width, kernel_radius) / static_cast<double>(n_frames);
}

}  // namespace rctd
