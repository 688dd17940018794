// synth.hpp
//
// Synthetic BEV scenes and feature renders. Teacher features are sharp
// isotropic bumps; student features blur each bump along the ego ray
// (depth-like error) and across it proportionally to range (azimuth-like
// error), then add seeded noise.
#ifndef RCTD_SYNTH_HPP
#define RCTD_SYNTH_HPP

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rctd/config.hpp"
#include "rctd/geometry.hpp"
#include "rctd/grid.hpp"

namespace rctd {

/// Platform-independent draws on top of std::mt19937_64, whose output
/// sequence is fixed by the standard (the std distributions are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller.
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SceneFrame {
    double timestamp = 0.0;
    std::vector<ObjectBox<double>> boxes;

    bool operator==(const SceneFrame&) const = default;
};

struct UncertaintyModel {
    double range_sigma = 0.0;    ///< m, spread along the ego-to-object ray
    double azimuth_sigma = 0.0;  ///< rad, spread across the ray (scaled by range)
    double noise_sigma = 0.0;    ///< additive feature noise

    void validate() const;
};

struct SpeedRange {
    double min = 2.0;
    double max = 10.0;
};

/// Deterministic scene: centers uniform in [-bounds, bounds]^2, car-sized
/// boxes, and about half the objects moving along their length axis with a
/// speed drawn from `speeds`; the rest are static.
SceneFrame generate_scene(std::uint64_t seed, std::int64_t n_objects, double bounds = 40.0,
                          SpeedRange speeds = {});

/// Constant-velocity history ending at `frame`, ordered oldest to newest; the
/// frame m steps back has centers p - m * dt * v.
std::vector<SceneFrame> propagate_scene(const SceneFrame& frame, double dt, std::int64_t n_frames);

/// Channel signature of the object with index `object_index`: 1.0 on channel
/// object_index % channels, values in [0, 0.5) elsewhere.
Vector<double> channel_pattern(std::int64_t object_index, std::int64_t channels);

FeatureGrid<double> render_teacher_features(const SceneFrame& frame, const GridSpec& grid, std::int64_t channels);

FeatureGrid<double> render_student_features(const SceneFrame& frame, const GridSpec& grid, std::int64_t channels,
                                            const UncertaintyModel& model, std::uint64_t seed);

/// Per-class confidence map: the student's localization blur with peak 1.0,
/// class = object index % num_classes. Values in [0, 1].
FeatureGrid<double> render_class_scores(const SceneFrame& frame, const GridSpec& grid, std::int64_t num_classes,
                                        const UncertaintyModel& model);

/// Linear stand-in for a learned history alignment network: uniform temporal
/// average followed by a (2r+1)^2 box blur with zero padding and fixed
/// divisor (2r+1)^2.
FeatureGrid<double> align_history(std::span<const FeatureGrid<double>> history, std::int64_t kernel_radius);

/// Gradient of a loss with respect to each history frame given its gradient
/// with respect to the aligned output. Every frame receives the same map.
Matrix<double> align_history_backward(const Matrix<double>& grad_aligned, std::int64_t height, std::int64_t width,
                                      std::int64_t n_frames, std::int64_t kernel_radius);

/// Zero-padded (2r+1)^2 box blur on every channel plane, divided by (2r+1)^2.
/// Self-adjoint.
Matrix<double> box_blur(const Matrix<double>& data, std::int64_t height, std::int64_t width, std::int64_t radius);

}  // namespace rctd

#endif  // RCTD_SYNTH_HPP
