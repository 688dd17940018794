#include "rctd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rctd/io.hpp"
#include "rctd/masks.hpp"

namespace rctd {

std::string to_string(LossId id) {
    switch (id) {
        case LossId::ra: return "ra";
        case LossId::t: return "t";
        case LossId::rd: return "rd";
    }
    return "?";
}

LossId parse_loss_id(const std::string& name) {
    if (name == "ra") return LossId::ra;
    if (name == "t") return LossId::t;
    if (name == "rd") return LossId::rd;
    throw std::invalid_argument("unknown loss id '" + name + "' (expected ra, t or rd)");
}

double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

namespace {

std::int64_t draw_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(hi - lo + 1));
}

FeatureGrid<double> random_features(Rng& rng, std::int64_t c, std::int64_t h, std::int64_t w) {
    auto g = FeatureGrid<double>::zeros(c, h, w);
    for (std::int64_t i = 0; i < g.data.size(); ++i) g.data.data()[i] = rng.uniform(-1.0, 1.0);
    return g;
}

Vector<double> random_direction(Rng& rng, std::int64_t c) {
    Vector<double> v(c);
    do {
        for (std::int64_t i = 0; i < c; ++i) v(i) = rng.normal();
    } while (v.norm() < 1e-3);
    return v / v.norm();
}

MaskGrid<double> random_mask(Rng& rng, std::int64_t h, std::int64_t w) {
    GridSpec spec;
    spec.height = h;
    spec.width = w;
    spec.origin_x = spec.origin_y = 0.0;
    spec.cell_size = 1.0;
    auto m = MaskGrid<double>::zeros(spec);
    for (std::int64_t j = 0; j < h; ++j) {
        for (std::int64_t k = 0; k < w; ++k) m(j, k) = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.05, 1.0);
    }
    if (m.active_count() == 0) m(0, 0) = 0.5;
    return m;
}

// Central differences of `loss` with respect to every entry of `param`,
// compared against `analytic`.
template <typename LossFn>
void compare_gradient(Matrix<double>& param, const Matrix<double>& analytic, double eps, LossFn&& loss,
                      AuditResult& result) {
    for (std::int64_t i = 0; i < param.size(); ++i) {
        double& x = param.data()[i];
        const double saved = x;
        x = saved + eps;
        const double up = loss();
        x = saved - eps;
        const double down = loss();
        x = saved;
        const double numeric = (up - down) / (2.0 * eps);
        result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic.data()[i], numeric));
        ++result.coordinates;
    }
}

constexpr double kCorruption = 1.01;

AuditResult audit_feature_loss(LossId id, Rng& rng, const AuditOptions& opts) {
    const std::int64_t h = draw_int(rng, 2, 8);
    const std::int64_t w = draw_int(rng, 2, 8);
    const std::int64_t c = draw_int(rng, 1, 4);
    const FeatureGrid<double> teacher = random_features(rng, c, h, w);
    const MaskGrid<double> mask = random_mask(rng, h, w);
    AuditResult result{id};

    if (id == LossId::ra) {
        FeatureGrid<double> student = teacher;
        for (std::int64_t i = 0; i < student.cells(); ++i) {
            student.data.col(i) += rng.uniform(0.2, 1.0) * random_direction(rng, c);
        }
        const NormKind norm = opts.rakd_squared ? NormKind::squared : NormKind::euclidean;
        Matrix<double> grad = rakd_loss(teacher, student, mask, norm).grad;
        if (opts.corrupt_gradient) grad *= kCorruption;
        compare_gradient(student.data, grad, opts.eps,
                         [&] { return rakd_loss(teacher, student, mask, norm).value; }, result);
        return result;
    }

    // Temporal loss: check the gradient on the aligned grid and, through the
    // alignment operator, on every history frame.
    const std::int64_t frames = draw_int(rng, 1, 3);
    const std::int64_t radius = draw_int(rng, 0, 1);
    std::vector<FeatureGrid<double>> history;
    for (std::int64_t f = 0; f < frames; ++f) history.push_back(random_features(rng, c, h, w));

    FeatureGrid<double> aligned = align_history(history, radius);
    Matrix<double> grad = tkd_loss(teacher, aligned, mask).grad;
    if (opts.corrupt_gradient) grad *= kCorruption;
    compare_gradient(aligned.data, grad, opts.eps, [&] { return tkd_loss(teacher, aligned, mask).value; }, result);

    const Matrix<double> grad_frame = align_history_backward(grad, h, w, frames, radius);
    for (auto& frame : history) {
        compare_gradient(frame.data, grad_frame, opts.eps,
                         [&] { return tkd_loss(teacher, align_history(history, radius), mask).value; }, result);
    }
    return result;
}

AuditResult audit_relational_loss(Rng& rng, const AuditOptions& opts) {
    const std::int64_t h = draw_int(rng, 3, 8);
    const std::int64_t w = draw_int(rng, 3, 8);
    const std::int64_t c = draw_int(rng, 2, 4);
    std::int64_t k = opts.positions > 0 ? opts.positions : draw_int(rng, 2, 6);
    k = std::min(k, h * w);

    std::vector<std::int64_t> cells(static_cast<std::size_t>(h * w));
    std::iota(cells.begin(), cells.end(), 0);
    for (std::size_t i = cells.size() - 1; i > 0; --i) {
        const auto r = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1));
        std::swap(cells[i], cells[r]);
    }
    cells.resize(static_cast<std::size_t>(k));
    std::sort(cells.begin(), cells.end());
    std::vector<CellIndex> positions;
    for (std::int64_t cell : cells) positions.push_back({cell / w, cell % w});

    const FeatureGrid<double> teacher = random_features(rng, c, h, w);
    FeatureGrid<double> student = random_features(rng, c, h, w);
    const AffinityMap<double> s_t = affinity_map(teacher, positions);
    // keep feature norms bounded away from zero and affinity entries away from
    // the |.| kink
    for (int attempt = 0; attempt < 1000; ++attempt) {
        bool ok = true;
        for (const auto& p : positions) ok = ok && student.cell(p.row, p.col).norm() > 0.3;
        if (ok) {
            const AffinityMap<double> s_s = affinity_map(student, positions);
            for (std::int64_t a = 0; a < k && ok; ++a) {
                for (std::int64_t b = 0; b < k && ok; ++b) {
                    if (a != b && std::abs(s_s.values(a, b) - s_t.values(a, b)) < 1e-3) ok = false;
                }
            }
        }
        if (ok) break;
        student = random_features(rng, c, h, w);
    }

    AuditResult result{LossId::rd};
    Matrix<double> grad = rdkd_loss(teacher, student, positions).grad;
    if (opts.corrupt_gradient) grad *= kCorruption;
    compare_gradient(student.data, grad, opts.eps, [&] { return rdkd_loss(teacher, student, positions).value; },
                     result);
    return result;
}

}  // namespace

AuditResult finite_difference_audit(LossId loss, std::uint64_t seed, const AuditOptions& options) {
    if (!(options.eps > 0.0)) throw std::invalid_argument("finite_difference_audit: eps must be > 0");
    Rng rng(seed);
    if (loss == LossId::rd) return audit_relational_loss(rng, options);
    return audit_feature_loss(loss, rng, options);
}

// ---------------------------------------------------------------------------

ToyProblem make_toy_problem(const DistillConfig& cfg, std::uint64_t seed, const ToyOptions& options) {
    cfg.validate();
    if (options.history_frames < 1) throw std::invalid_argument("ToyOptions: history_frames must be >= 1");
    const GridSpec& grid = cfg.grid;
    const UncertaintyModel model = options.perfect_student ? UncertaintyModel{} : options.student_model;

    const SceneFrame scene = generate_scene(seed, options.n_objects, options.scene_bounds);
    const std::vector<SceneFrame> frames = propagate_scene(scene, options.frame_dt, options.history_frames);

    ToyProblem p;
    p.teacher_low = render_teacher_features(scene, grid, options.channels);
    p.teacher_high = render_teacher_features(scene, grid, options.high_channels);
    p.teacher_high.level = FeatureLevel::high;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        p.history.push_back(render_student_features(frames[f], grid, options.channels, model, seed * 1000 + f + 1));
    }
    p.student_high = render_student_features(scene, grid, options.high_channels, model, seed * 1000 + 999);
    p.student_high.level = FeatureLevel::high;
    p.projection = Matrix<double>::Identity(options.channels, options.channels);
    p.bias = Vector<double>::Zero(options.channels);
    p.w_ra = build_rakd_mask<double>(scene.boxes, grid, cfg);
    p.w_t = build_tkd_mask<double>(scene.boxes, grid, cfg);
    const FeatureGrid<double> scores = render_class_scores(scene, grid, options.num_classes, model);
    p.positions = select_confident_positions(scores, cfg.tau_cls, cfg.k_max);
    return p;
}

namespace {

struct StepLosses {
    TraceStep record;
    TotalLoss<double> total;
    FeatureGrid<double> projected;
};

StepLosses evaluate(const ToyProblem& p, const DistillConfig& cfg, std::int64_t kernel_radius) {
    const FeatureGrid<double>& current = p.history.back();
    FeatureGrid<double> projected = channel_project(current, p.projection, p.bias);
    const FeatureGrid<double> aligned = align_history(p.history, kernel_radius);

    const NormKind norm = cfg.rakd_squared ? NormKind::squared : NormKind::euclidean;
    const LossValue<double> ra = rakd_loss(p.teacher_low, projected, p.w_ra, norm);
    const LossValue<double> t = tkd_loss(p.teacher_low, aligned, p.w_t);
    const LossValue<double> rd = rdkd_loss(p.teacher_high, p.student_high, p.positions);

    StepLosses out{TraceStep{}, total_loss(0.0, ra, t, rd, cfg), std::move(projected)};
    out.record.l_ra = ra.value;
    out.record.l_t = t.value;
    out.record.l_rd = rd.value;
    out.record.l_total = out.total.value;
    out.record.masked_mse_rakd = masked_mse(p.teacher_low, out.projected, p.w_ra);
    out.record.masked_mse_tkd = masked_mse(p.teacher_low, aligned, p.w_t);
    return out;
}

}  // namespace

TraceStep evaluate_toy(const ToyProblem& problem, const DistillConfig& cfg, std::int64_t kernel_radius) {
    return evaluate(problem, cfg, kernel_radius).record;
}

ToyRun run_toy_distillation_detailed(const DistillConfig& cfg, std::uint64_t seed, std::int64_t steps, double lr,
                                     const ToyOptions& options, const StepObserver& observer) {
    if (steps < 1) throw std::invalid_argument("run_toy_distillation: steps must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("run_toy_distillation: lr must be > 0");

    ToyRun run;
    run.initial = make_toy_problem(cfg, seed, options);
    run.trace.config = cfg;
    run.trace.seed = seed;
    run.trace.lr = lr;

    ToyProblem p = run.initial;
    const std::int64_t h = cfg.grid.height;
    const std::int64_t w = cfg.grid.width;
    const auto n_frames = static_cast<std::int64_t>(p.history.size());
    double initial_total = 0.0;

    for (std::int64_t s = 0; s < steps; ++s) {
        StepLosses l = evaluate(p, cfg, options.kernel_radius);
        l.record.step = s;
        if (s == 0) initial_total = l.record.l_total;
        if (!std::isfinite(l.record.l_total) || l.record.l_total > 10.0 * initial_total) {
            std::ostringstream msg;
            msg << "toy distillation diverged at step " << s << ": L_total = " << l.record.l_total
                << " (initial " << initial_total << ", lr " << lr << ")";
            throw DivergenceError(msg.str());
        }
        run.trace.steps.push_back(l.record);

        const ProjectionGrad<double> pg = channel_project_backward(p.history.back(), p.projection, l.total.grad_ra);
        const Matrix<double> frame_grad = align_history_backward(l.total.grad_t, h, w, n_frames, options.kernel_radius);
        for (auto& frame : p.history) frame.data -= lr * frame_grad;
        p.history.back().data -= lr * pg.input;
        if (options.train_projection) {
            p.projection -= (lr * options.projection_lr_scale) * pg.weights;
            p.bias -= (lr * options.projection_lr_scale) * pg.bias;
        }
        p.student_high.data -= lr * l.total.grad_rd;
        if (observer) observer(s, p);
    }
    run.final = std::move(p);
    return run;
}

// ---------------------------------------------------------------------------

nlohmann::json trace_to_json(const TrainingTrace& trace) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : trace.steps) {
        steps.push_back({{"step", s.step},
                         {"l_ra", s.l_ra},
                         {"l_t", s.l_t},
                         {"l_rd", s.l_rd},
                         {"l_total", s.l_total},
                         {"masked_mse_rakd", s.masked_mse_rakd},
                         {"masked_mse_tkd", s.masked_mse_tkd}});
    }
    return {{"seed", trace.seed}, {"lr", trace.lr}, {"config", config_to_json(trace.config)}, {"steps", steps}};
}

TrainingTrace trace_from_json(const nlohmann::json& j) {
    TrainingTrace t;
    try {
        t.seed = j.at("seed").get<std::uint64_t>();
        t.lr = j.at("lr").get<double>();
        t.config = config_from_json(j.at("config"));
        for (const auto& s : j.at("steps")) {
            t.steps.push_back({s.at("step").get<std::int64_t>(), s.at("l_ra").get<double>(), s.at("l_t").get<double>(),
                               s.at("l_rd").get<double>(), s.at("l_total").get<double>(),
                               s.at("masked_mse_rakd").get<double>(), s.at("masked_mse_tkd").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("trace: ") + e.what());
    }
    return t;
}

std::int64_t count_increases(const std::vector<double>& series) {
    std::int64_t n = 0;
    for (std::size_t i = 1; i < series.size(); ++i) n += series[i] > series[i - 1] ? 1 : 0;
    return n;
}

nlohmann::json summarize(const TrainingTrace& trace) {
    if (trace.steps.empty()) throw std::invalid_argument("summarize: empty trace");
    auto series = [&](double TraceStep::*field) {
        std::vector<double> v;
        v.reserve(trace.steps.size());
        for (const auto& s : trace.steps) v.push_back(s.*field);
        return v;
    };
    auto entry = [&](double TraceStep::*field) {
        const std::vector<double> v = series(field);
        const double first = v.front();
        const double last = v.back();
        return nlohmann::json{{"initial", first},
                              {"final", last},
                              {"ratio", first == 0.0 ? 1.0 : last / first},
                              {"increases", count_increases(v)}};
    };
    return {{"steps", trace.steps.size()},
            {"seed", trace.seed},
            {"lr", trace.lr},
            {"l_ra", entry(&TraceStep::l_ra)},
            {"l_t", entry(&TraceStep::l_t)},
            {"l_rd", entry(&TraceStep::l_rd)},
            {"l_total", entry(&TraceStep::l_total)},
            {"masked_mse_rakd", entry(&TraceStep::masked_mse_rakd)},
            {"masked_mse_tkd", entry(&TraceStep::masked_mse_tkd)}};
}

}  // namespace rctd
