// harness.hpp
//
// Gradient audits against central finite differences, and a toy distillation
// loop that trains synthetic student features toward a frozen teacher.
#ifndef RCTD_HARNESS_HPP
#define RCTD_HARNESS_HPP

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rctd/config.hpp"
#include "rctd/grid.hpp"
#include "rctd/losses.hpp"
#include "rctd/synth.hpp"

namespace rctd {

enum class LossId { ra, t, rd };

std::string to_string(LossId id);
LossId parse_loss_id(const std::string& name);

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double relative_error(double analytic, double numeric);

struct AuditOptions {
    double eps = 1e-5;
    std::int64_t positions = 0;     ///< relational audit only; 0 draws K from the seed
    bool corrupt_gradient = false;  ///< negative control: perturbs the analytic gradient
    bool rakd_squared = false;
};

struct AuditResult {
    LossId loss;
    double max_rel_error = 0.0;
    std::int64_t coordinates = 0;  ///< number of gradient entries compared
};

/// Builds a random instance (at most 8x8 cells, 4 channels, 6 relational
/// positions) and compares the analytic gradient to central differences
/// coordinate by coordinate. Instances keep every masked channel difference
/// away from zero.
AuditResult finite_difference_audit(LossId loss, std::uint64_t seed, const AuditOptions& options);

inline double finite_difference_audit(LossId loss, std::uint64_t seed, double eps) {
    AuditOptions opts;
    opts.eps = eps;
    return finite_difference_audit(loss, seed, opts).max_rel_error;
}

struct TraceStep {
    std::int64_t step = 0;
    double l_ra = 0.0;
    double l_t = 0.0;
    double l_rd = 0.0;
    double l_total = 0.0;
    double masked_mse_rakd = 0.0;
    double masked_mse_tkd = 0.0;

    bool operator==(const TraceStep&) const = default;
};

/// Learning rate used by the CLI when none is given.
inline constexpr double kDefaultToyLearningRate = 5.0;

struct TrainingTrace {
    std::vector<TraceStep> steps;
    DistillConfig config;
    std::uint64_t seed = 0;
    double lr = 0.0;
};

struct ToyOptions {
    std::int64_t n_objects = 6;
    double scene_bounds = 40.0;
    std::int64_t channels = 8;       ///< low-level teacher and student channels
    std::int64_t high_channels = 6;  ///< high-level feature channels
    std::int64_t num_classes = 3;
    std::int64_t history_frames = 2;
    double frame_dt = 0.5;  ///< s between history frames
    /// Box blur radius of the alignment stand-in. With radius >= 1 a sharp
    /// teacher bump is reachable only through an ill-conditioned deblur, so
    /// the loop defaults to a plain temporal average.
    std::int64_t kernel_radius = 0;
    UncertaintyModel student_model{2.5, 0.03, 0.05};
    bool train_projection = true;
    /// Step-size multiplier for the projection weights and bias. Their
    /// gradient sums over every masked cell, so a full step at the feature
    /// learning rate overshoots.
    double projection_lr_scale = 1e-4;
    /// Student renders use a zero uncertainty model so the student matches the teacher.
    bool perfect_student = false;
};

/// Everything the toy loop optimizes, plus the frozen teacher and masks.
struct ToyProblem {
    FeatureGrid<double> teacher_low;
    FeatureGrid<double> teacher_high;
    std::vector<FeatureGrid<double>> history;  ///< oldest to newest; back() is the current student low-level grid
    FeatureGrid<double> student_high;
    Matrix<double> projection;
    Vector<double> bias;
    MaskGrid<double> w_ra;
    MaskGrid<double> w_t;
    std::vector<CellIndex> positions;
};

ToyProblem make_toy_problem(const DistillConfig& cfg, std::uint64_t seed, const ToyOptions& options = {});

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ToyRun {
    TrainingTrace trace;
    ToyProblem initial;
    ToyProblem final;
};

/// Called after each update with the step index and the updated state.
using StepObserver = std::function<void(std::int64_t, const ToyProblem&)>;

/// Plain full-batch gradient descent on
/// lambda_ra * L_RA + lambda_t * L_T + lambda_rd * L_RD (no detection term).
/// Each trace entry holds the losses before that step's update. Throws
/// DivergenceError when the objective exceeds 10x its initial value.
ToyRun run_toy_distillation_detailed(const DistillConfig& cfg, std::uint64_t seed, std::int64_t steps, double lr,
                                     const ToyOptions& options = {}, const StepObserver& observer = {});

inline TrainingTrace run_toy_distillation(const DistillConfig& cfg, std::uint64_t seed, std::int64_t steps,
                                          double lr, const ToyOptions& options = {}) {
    return run_toy_distillation_detailed(cfg, seed, steps, lr, options).trace;
}

/// Evaluates the losses of a problem state without updating it.
TraceStep evaluate_toy(const ToyProblem& problem, const DistillConfig& cfg, std::int64_t kernel_radius);

nlohmann::json trace_to_json(const TrainingTrace& trace);
TrainingTrace trace_from_json(const nlohmann::json& j);

/// Initial and final values, final/initial ratios (1.0 when the initial
/// value is zero), and the number of steps on which each series increased.
nlohmann::json summarize(const TrainingTrace& trace);

/// Number of steps i with series[i] > series[i-1].
std::int64_t count_increases(const std::vector<double>& series);

}  // namespace rctd

#endif  // RCTD_HARNESS_HPP
