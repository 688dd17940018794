// rctdistill: command-line front end for mask rasterization, distillation
// losses, gradient audits and the toy training loop.
//
// Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 verification
// failure. RCTD_NUM_THREADS sets the worker thread count.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "rctd/config.hpp"
#include "rctd/harness.hpp"
#include "rctd/io.hpp"
#include "rctd/losses.hpp"
#include "rctd/masks.hpp"
#include "rctd/synth.hpp"

namespace {

using namespace rctd;
namespace fs = std::filesystem;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

constexpr double kGradientTolerance = 1e-5;

class VerificationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void apply_thread_env() {
    const char* env = std::getenv("RCTD_NUM_THREADS");
    if (env == nullptr) return;
    const int n = std::atoi(env);
    if (n < 1) throw std::invalid_argument("RCTD_NUM_THREADS must be a positive integer");
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
}

DistillConfig config_or_default(const std::string& path) {
    return path.empty() ? DistillConfig{} : load_config(path);
}

GridDtype parse_dtype(const std::string& s) { return s == "f64" ? GridDtype::f64 : GridDtype::f32; }

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

nlohmann::json loss_report(const std::string& name, double value, std::int64_t active, double grad_norm) {
    return {{"loss_name", name}, {"value", value}, {"n_active_cells", active}, {"grad_norm", grad_norm}};
}

nlohmann::json affinity_json(const AffinityMap<double>& s) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::int64_t a = 0; a < s.size(); ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (std::int64_t b = 0; b < s.size(); ++b) row.push_back(s.values(a, b));
        rows.push_back(row);
    }
    return rows;
}

struct GenSceneArgs {
    std::uint64_t seed = 1;
    std::int64_t objects = 5;
    double bounds = 40.0;
    double min_speed = 2.0;
    double max_speed = 10.0;
    std::string out;
};

void run_gen_scene(const GenSceneArgs& a) {
    save_scene(a.out, generate_scene(a.seed, a.objects, a.bounds, SpeedRange{a.min_speed, a.max_speed}));
}

struct RasterizeArgs {
    std::string scene;
    std::string mode = "rakd";
    std::string config;
    std::string out;
    std::string pgm;
    std::string dtype = "f32";
};

void run_rasterize(const RasterizeArgs& a) {
    const DistillConfig cfg = config_or_default(a.config);
    const SceneFrame scene = load_scene(a.scene);
    const MaskGrid<double> mask = a.mode == "tkd" ? build_tkd_mask<double>(scene.boxes, cfg.grid, cfg)
                                                  : build_rakd_mask<double>(scene.boxes, cfg.grid, cfg);
    save_grid(a.out, grid_file_from(mask, parse_dtype(a.dtype)));
    if (!a.pgm.empty()) save_pgm(a.pgm, mask.values);
}

struct LossArgs {
    std::string teacher;
    std::string student;
    std::string mask;
    std::string loss = "ra";
    std::string config;
};

void run_loss(const LossArgs& a) {
    const DistillConfig cfg = config_or_default(a.config);
    const FeatureGrid<double> teacher = features_from(load_grid(a.teacher));
    const FeatureGrid<double> student = features_from(load_grid(a.student));
    const MaskGrid<double> mask = mask_from(load_grid(a.mask));
    const LossValue<double> l =
        a.loss == "t" ? tkd_loss(teacher, student, mask)
                      : rakd_loss(teacher, student, mask, cfg.rakd_squared ? NormKind::squared : NormKind::euclidean);
    print_json(loss_report(a.loss, l.value, l.active, l.grad_norm()));
}

struct AffinityArgs {
    std::string teacher;
    std::string student;
    std::string scores;
    std::string config;
    bool matrices = false;
};

void run_affinity(const AffinityArgs& a) {
    const DistillConfig cfg = config_or_default(a.config);
    const FeatureGrid<double> teacher = features_from(load_grid(a.teacher));
    const FeatureGrid<double> student = features_from(load_grid(a.student));
    const FeatureGrid<double> scores = features_from(load_grid(a.scores));
    if (scores.height != student.height || scores.width != student.width) {
        throw DataError("affinity: score map and feature grids differ in spatial size");
    }
    const std::vector<CellIndex> positions = select_confident_positions(scores, cfg.tau_cls, cfg.k_max);
    const LossValue<double> l = rdkd_loss(teacher, student, positions);
    nlohmann::json report = loss_report("rd", l.value, l.active, l.grad_norm());
    nlohmann::json pos = nlohmann::json::array();
    for (const auto& p : positions) pos.push_back({p.row, p.col});
    report["positions"] = pos;
    if (a.matrices) {
        report["teacher_affinity"] = affinity_json(affinity_map(teacher, positions));
        report["student_affinity"] = affinity_json(affinity_map(student, positions));
    }
    print_json(report);
}

struct TrainArgs {
    std::string config;
    std::uint64_t seed = 7;
    std::int64_t steps = 200;
    double lr = kDefaultToyLearningRate;
    std::string out;
    std::string snapshot_dir;
    std::int64_t snapshot_every = 0;
};

void run_train(const TrainArgs& a) {
    const DistillConfig cfg = config_or_default(a.config);
    StepObserver observer;
    if (!a.snapshot_dir.empty() && a.snapshot_every > 0) {
        fs::create_directories(a.snapshot_dir);
        observer = [&](std::int64_t step, const ToyProblem& p) {
            if (step % a.snapshot_every != 0) return;
            FeatureGrid<double> diff = p.history.back();
            diff.data = p.teacher_low.data - channel_project(p.history.back(), p.projection, p.bias).data;
            std::ostringstream name;
            name << "step_" << std::setw(5) << std::setfill('0') << step << ".pgm";
            save_pgm(fs::path(a.snapshot_dir) / name.str(), channel_norms(diff));
        };
    }
    const ToyRun run = run_toy_distillation_detailed(cfg, a.seed, a.steps, a.lr, ToyOptions{}, observer);
    if (!a.out.empty()) save_text(a.out, trace_to_json(run.trace).dump(2) + "\n");
    print_json(summarize(run.trace));
}

struct CheckGradsArgs {
    std::uint64_t seed = 1;
    std::int64_t seeds = 1;
    double eps = 1e-5;
    bool corrupt = false;
};

void run_check_grads(const CheckGradsArgs& a) {
    AuditOptions opts;
    opts.eps = a.eps;
    opts.corrupt_gradient = a.corrupt;
    nlohmann::json results = nlohmann::json::array();
    bool all_pass = true;
    for (LossId id : {LossId::ra, LossId::t, LossId::rd}) {
        double worst = 0.0;
        std::int64_t coords = 0;
        for (std::int64_t i = 0; i < a.seeds; ++i) {
            const AuditResult r = finite_difference_audit(id, a.seed + static_cast<std::uint64_t>(i), opts);
            worst = std::max(worst, r.max_rel_error);
            coords += r.coordinates;
        }
        const bool pass = worst < kGradientTolerance;
        all_pass = all_pass && pass;
        results.push_back({{"loss", to_string(id)}, {"max_rel_error", worst}, {"coordinates", coords}, {"pass", pass}});
    }
    print_json({{"seed", a.seed}, {"seeds", a.seeds}, {"eps", a.eps}, {"tolerance", kGradientTolerance},
                {"results", results}, {"pass", all_pass}});
    if (!all_pass) throw VerificationFailure("gradient check failed");
}

struct HeatmapArgs {
    std::string grid;
    std::string out;
    std::int64_t channel = -1;
    double scale = 1.0;
    bool auto_scale = false;
};

void run_heatmap(const HeatmapArgs& a) {
    const GridFile file = load_grid(a.grid);
    RowMajorMatrix<double> values;
    const FeatureGrid<double> f = features_from(file);
    if (a.channel >= 0) {
        if (a.channel >= f.channels()) throw DataError("heatmap: channel out of range");
        values.resize(f.height, f.width);
        for (std::int64_t j = 0; j < f.height; ++j) {
            for (std::int64_t k = 0; k < f.width; ++k) values(j, k) = f(a.channel, j, k);
        }
    } else if (f.channels() == 1) {
        values = mask_from(file).values;
    } else {
        values = channel_norms(f);
    }
    double scale = a.scale;
    if (a.auto_scale) scale = values.size() > 0 && values.maxCoeff() > 0.0 ? values.maxCoeff() : 1.0;
    save_pgm(a.out, values, scale);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Range-azimuth, temporal and relational BEV distillation toolkit"};
    app.require_subcommand(1);

    GenSceneArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-scene", "Generate a deterministic synthetic scene as JSON");
    gen_cmd->add_option("--seed", gen.seed, "Random seed");
    gen_cmd->add_option("--objects", gen.objects, "Number of objects")->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--bounds", gen.bounds, "Half extent of the placement square (m)")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--min-speed", gen.min_speed, "Minimum speed of moving objects (m/s)");
    gen_cmd->add_option("--max-speed", gen.max_speed, "Maximum speed of moving objects (m/s)");
    gen_cmd->add_option("--out,-o", gen.out, "Output scene JSON")->required();

    RasterizeArgs ras;
    auto* ras_cmd = app.add_subcommand("rasterize", "Build a distillation mask from a scene");
    ras_cmd->add_option("--scene", ras.scene, "Scene JSON")->required();
    ras_cmd->add_option("--mode", ras.mode, "Mask type")->check(CLI::IsMember({"rakd", "tkd"}));
    ras_cmd->add_option("--config", ras.config, "Config JSON");
    ras_cmd->add_option("--out,-o", ras.out, "Output grid file")->required();
    ras_cmd->add_option("--pgm", ras.pgm, "Optional PGM heatmap");
    ras_cmd->add_option("--dtype", ras.dtype, "Payload type")->check(CLI::IsMember({"f32", "f64"}));

    LossArgs loss;
    auto* loss_cmd = app.add_subcommand("loss", "Evaluate a masked feature distillation loss");
    loss_cmd->add_option("--teacher", loss.teacher, "Teacher feature grid")->required();
    loss_cmd->add_option("--student", loss.student, "Student feature grid")->required();
    loss_cmd->add_option("--mask", loss.mask, "Mask grid")->required();
    loss_cmd->add_option("--loss", loss.loss, "Loss id")->check(CLI::IsMember({"ra", "t"}));
    loss_cmd->add_option("--config", loss.config, "Config JSON");

    AffinityArgs aff;
    auto* aff_cmd = app.add_subcommand("affinity", "Evaluate the relational loss at confident positions");
    aff_cmd->add_option("--teacher", aff.teacher, "Teacher high-level feature grid")->required();
    aff_cmd->add_option("--student", aff.student, "Student high-level feature grid")->required();
    aff_cmd->add_option("--scores", aff.scores, "Per-class score grid")->required();
    aff_cmd->add_option("--config", aff.config, "Config JSON");
    aff_cmd->add_flag("--matrices", aff.matrices, "Include both affinity matrices in the report");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Run the toy distillation loop");
    train_cmd->add_option("--config", train.config, "Config JSON");
    train_cmd->add_option("--seed", train.seed, "Scene seed");
    train_cmd->add_option("--steps", train.steps, "Gradient descent steps")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", train.lr, "Learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--out,-o", train.out, "Output trace JSON");
    train_cmd->add_option("--snapshot-dir", train.snapshot_dir, "Directory for |teacher - student| PGM snapshots");
    train_cmd->add_option("--snapshot-every", train.snapshot_every, "Snapshot period in steps");

    CheckGradsArgs grads;
    auto* grads_cmd = app.add_subcommand("check-grads", "Audit analytic gradients against finite differences");
    grads_cmd->add_option("--seed", grads.seed, "First seed");
    grads_cmd->add_option("--seeds", grads.seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
    grads_cmd->add_option("--eps", grads.eps, "Finite-difference step")->check(CLI::PositiveNumber);
    grads_cmd->add_flag("--corrupt-gradient", grads.corrupt, "Perturb analytic gradients (negative control)");

    HeatmapArgs heat;
    auto* heat_cmd = app.add_subcommand("heatmap", "Render a grid file as an 8-bit PGM");
    heat_cmd->add_option("--grid", heat.grid, "Grid file")->required();
    heat_cmd->add_option("--out,-o", heat.out, "Output PGM")->required();
    heat_cmd->add_option("--channel", heat.channel, "Channel to render (default: mask or channel norm)");
    heat_cmd->add_option("--scale", heat.scale, "Value mapped to 255")->check(CLI::PositiveNumber);
    heat_cmd->add_flag("--auto-scale", heat.auto_scale, "Map the maximum value to 255");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        apply_thread_env();
        if (*gen_cmd) run_gen_scene(gen);
        else if (*ras_cmd) run_rasterize(ras);
        else if (*loss_cmd) run_loss(loss);
        else if (*aff_cmd) run_affinity(aff);
        else if (*train_cmd) run_train(train);
        else if (*grads_cmd) run_check_grads(grads);
        else if (*heat_cmd) run_heatmap(heat);
    } catch (const VerificationFailure& e) {
        std::cerr << "rctdistill: " << e.what() << "\n";
        return kExitVerification;
    } catch (const DivergenceError& e) {
        std::cerr << "rctdistill: " << e.what() << "\n";
        return kExitVerification;
    } catch (const std::exception& e) {
        std::cerr << "rctdistill: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
