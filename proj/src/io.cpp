#include "rctd/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace rctd {

namespace {

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
    std::array<char, sizeof(UInt)> bytes{};
    for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt get_le(std::istream& in) {
    std::array<unsigned char, sizeof(UInt)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) throw DataError("grid file: truncated header or payload");
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

std::uint32_t checked_dim(std::int64_t v, const char* name) {
    if (v < 1 || v > std::numeric_limits<std::uint32_t>::max()) {
        throw DataError(std::string("grid file: dimension ") + name + " out of range");
    }
    return static_cast<std::uint32_t>(v);
}

double number_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw DataError(std::string("missing field '") + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number()) throw DataError(std::string("field '") + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw DataError(std::string("field '") + key + "' must be finite");
    return d;
}

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw DataError(std::string(what) + ": unknown key '" + key + "'");
    }
}

std::ofstream open_for_write(const std::filesystem::path& path, std::ios::openmode mode) {
    std::ofstream out(path, mode);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_for_read(const std::filesystem::path& path, std::ios::openmode mode) {
    std::ifstream in(path, mode);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return in;
}

}  // namespace

GridFile grid_file_from(const MaskGrid<double>& mask, GridDtype dtype) {
    GridFile f;
    f.spec = mask.grid;
    f.channels = 1;
    f.dtype = dtype;
    f.data.resize(1, mask.grid.cells());
    for (std::int64_t j = 0; j < mask.grid.height; ++j) {
        for (std::int64_t k = 0; k < mask.grid.width; ++k) f.data(0, mask.grid.flat_index(j, k)) = mask.values(j, k);
    }
    return f;
}

GridFile grid_file_from(const FeatureGrid<double>& features, const GridSpec& spec, GridDtype dtype) {
    if (spec.height != features.height || spec.width != features.width) {
        throw DataError("grid_file_from: GridSpec does not match the feature grid");
    }
    return {spec, features.channels(), features.data, dtype};
}

MaskGrid<double> mask_from(const GridFile& file) {
    if (file.channels != 1) {
        throw DataError("mask grid must have exactly one channel, got " + std::to_string(file.channels));
    }
    MaskGrid<double> m = MaskGrid<double>::zeros(file.spec);
    for (std::int64_t j = 0; j < file.spec.height; ++j) {
        for (std::int64_t k = 0; k < file.spec.width; ++k) m.values(j, k) = file.data(0, file.spec.flat_index(j, k));
    }
    return m;
}

FeatureGrid<double> features_from(const GridFile& file) {
    return {file.spec.height, file.spec.width, file.data, FeatureLevel::low, FeatureSource::teacher};
}

void write_grid(std::ostream& out, const GridFile& grid) {
    if (grid.data.rows() != grid.channels || grid.data.cols() != grid.spec.cells()) {
        throw DataError("write_grid: data shape does not match header");
    }
    out.write("BEVG", 4);
    put_le<std::uint16_t>(out, kGridFormatVersion);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(grid.dtype));
    put_le(out, checked_dim(grid.channels, "C"));
    put_le(out, checked_dim(grid.spec.height, "H"));
    put_le(out, checked_dim(grid.spec.width, "W"));
    put_f64(out, grid.spec.origin_x);
    put_f64(out, grid.spec.origin_y);
    put_f64(out, grid.spec.cell_size);
    for (std::int64_t c = 0; c < grid.channels; ++c) {
        for (std::int64_t i = 0; i < grid.spec.cells(); ++i) {
            const double v = grid.data(c, i);
            if (grid.dtype == GridDtype::f32) {
                put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            } else {
                put_f64(out, v);
            }
        }
    }
    if (!out) throw DataError("write_grid: write failed");
}

GridFile read_grid(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::string(magic.data(), 4) != "BEVG") throw DataError("grid file: bad magic");
    const auto version = get_le<std::uint16_t>(in);
    if (version != kGridFormatVersion) throw DataError("grid file: unsupported version " + std::to_string(version));
    const auto tag = get_le<std::uint16_t>(in);
    if (tag != 1 && tag != 2) throw DataError("grid file: unknown dtype tag " + std::to_string(tag));

    GridFile g;
    g.dtype = static_cast<GridDtype>(tag);
    g.channels = get_le<std::uint32_t>(in);
    g.spec.height = get_le<std::uint32_t>(in);
    g.spec.width = get_le<std::uint32_t>(in);
    g.spec.origin_x = get_f64(in);
    g.spec.origin_y = get_f64(in);
    g.spec.cell_size = get_f64(in);
    if (g.channels < 1) throw DataError("grid file: zero channels");
    try {
        g.spec.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("grid file: ") + e.what());
    }
    g.data.resize(g.channels, g.spec.cells());
    for (std::int64_t c = 0; c < g.channels; ++c) {
        for (std::int64_t i = 0; i < g.spec.cells(); ++i) {
            g.data(c, i) = g.dtype == GridDtype::f32 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in)))
                                                     : get_f64(in);
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("grid file: trailing bytes after payload");
    return g;
}

void save_grid(const std::filesystem::path& path, const GridFile& grid) {
    auto out = open_for_write(path, std::ios::binary | std::ios::trunc);
    write_grid(out, grid);
}

GridFile load_grid(const std::filesystem::path& path) {
    auto in = open_for_read(path, std::ios::binary);
    return read_grid(in);
}

nlohmann::json scene_to_json(const SceneFrame& frame) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : frame.boxes) {
        boxes.push_back({{"cx", b.center().x()},
                         {"cy", b.center().y()},
                         {"heading", b.heading()},
                         {"length", b.length()},
                         {"width", b.width()},
                         {"vx", b.velocity().x()},
                         {"vy", b.velocity().y()}});
    }
    return {{"timestamp", frame.timestamp}, {"boxes", boxes}};
}

SceneFrame scene_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("scene: top level must be an object");
    reject_unknown_keys(j, {"timestamp", "boxes"}, "scene");
    SceneFrame frame;
    frame.timestamp = number_field(j, "timestamp");
    if (!j.contains("boxes") || !j.at("boxes").is_array()) throw DataError("scene: 'boxes' must be an array");
    static const std::set<std::string> box_keys{"cx", "cy", "heading", "length", "width", "vx", "vy"};
    for (const auto& jb : j.at("boxes")) {
        if (!jb.is_object()) throw DataError("scene: every box must be an object");
        reject_unknown_keys(jb, box_keys, "scene box");
        try {
            frame.boxes.emplace_back(Vec2<double>(number_field(jb, "cx"), number_field(jb, "cy")),
                                     number_field(jb, "heading"), number_field(jb, "length"),
                                     number_field(jb, "width"),
                                     Vec2<double>(number_field(jb, "vx"), number_field(jb, "vy")));
        } catch (const std::invalid_argument& e) {
            throw DataError(std::string("scene: ") + e.what());
        }
    }
    return frame;
}

void save_scene(const std::filesystem::path& path, const SceneFrame& frame) {
    save_text(path, scene_to_json(frame).dump(2) + "\n");
}

SceneFrame load_scene(const std::filesystem::path& path) {
    auto in = open_for_read(path, std::ios::in);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("scene: " + std::string(e.what()));
    }
    return scene_from_json(j);
}

nlohmann::json config_to_json(const DistillConfig& cfg) {
    return {{"alpha_l", cfg.alpha_l},
            {"alpha_w", cfg.alpha_w},
            {"r_max", cfg.r_max},
            {"tau", cfg.tau},
            {"tau_v", cfg.tau_v},
            {"t_s", cfg.t_s},
            {"tau_cls", cfg.tau_cls},
            {"k_max", cfg.k_max},
            {"lambda_ra", cfg.lambda_ra},
            {"lambda_t", cfg.lambda_t},
            {"lambda_rd", cfg.lambda_rd},
            {"rakd_squared", cfg.rakd_squared},
            {"grid_height", cfg.grid.height},
            {"grid_width", cfg.grid.width},
            {"grid_origin_x", cfg.grid.origin_x},
            {"grid_origin_y", cfg.grid.origin_y},
            {"grid_cell_size", cfg.grid.cell_size}};
}

DistillConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("config: top level must be an object");
    DistillConfig cfg;
    const nlohmann::json defaults = config_to_json(cfg);
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) throw DataError("config: unknown key '" + key + "'");
    }
    auto num = [&](const char* key, double& field) {
        if (j.contains(key)) field = number_field(j, key);
    };
    auto count = [&](const char* key, std::int64_t& field) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_number_integer()) throw DataError(std::string("config: '") + key + "' must be an integer");
        field = j.at(key).get<std::int64_t>();
    };
    num("alpha_l", cfg.alpha_l);
    num("alpha_w", cfg.alpha_w);
    num("r_max", cfg.r_max);
    num("tau", cfg.tau);
    num("tau_v", cfg.tau_v);
    num("t_s", cfg.t_s);
    num("tau_cls", cfg.tau_cls);
    count("k_max", cfg.k_max);
    num("lambda_ra", cfg.lambda_ra);
    num("lambda_t", cfg.lambda_t);
    num("lambda_rd", cfg.lambda_rd);
    if (j.contains("rakd_squared")) {
        if (!j.at("rakd_squared").is_boolean()) throw DataError("config: 'rakd_squared' must be a boolean");
        cfg.rakd_squared = j.at("rakd_squared").get<bool>();
    }
    count("grid_height", cfg.grid.height);
    count("grid_width", cfg.grid.width);
    num("grid_origin_x", cfg.grid.origin_x);
    num("grid_origin_y", cfg.grid.origin_y);
    num("grid_cell_size", cfg.grid.cell_size);
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    return cfg;
}

DistillConfig load_config(const std::filesystem::path& path) {
    auto in = open_for_read(path, std::ios::in);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("config: " + std::string(e.what()));
    }
    return config_from_json(j);
}

void write_pgm(std::ostream& out, const RowMajorMatrix<double>& values, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("write_pgm: scale must be > 0");
    out << "P5\n" << values.cols() << ' ' << values.rows() << "\n255\n";
    for (std::int64_t j = 0; j < values.rows(); ++j) {
        for (std::int64_t k = 0; k < values.cols(); ++k) {
            const double v = std::clamp(values(j, k) / scale, 0.0, 1.0);
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
    if (!out) throw DataError("write_pgm: write failed");
}

void save_pgm(const std::filesystem::path& path, const RowMajorMatrix<double>& values, double scale) {
    auto out = open_for_write(path, std::ios::binary | std::ios::trunc);
    write_pgm(out, values, scale);
}

RowMajorMatrix<double> channel_norms(const FeatureGrid<double>& features) {
    RowMajorMatrix<double> out(features.height, features.width);
    for (std::int64_t j = 0; j < features.height; ++j) {
        for (std::int64_t k = 0; k < features.width; ++k) out(j, k) = features.cell(j, k).norm();
    }
    return out;
}

void save_text(const std::filesystem::path& path, const std::string& text) {
    auto out = open_for_write(path, std::ios::out | std::ios::trunc);
    out << text;
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

}  // namespace rctd
