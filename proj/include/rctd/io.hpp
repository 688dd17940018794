// io.hpp
//
// File formats.
//
// Binary grid ("BEVG"), all fields little-endian:
//   offset  0  char[4]  magic "BEVG"
//   offset  4  u16      format version (1)
//   offset  6  u16      dtype tag: 1 = f32, 2 = f64
//   offset  8  u32 x 3  C, H, W
//   offset 20  f64 x 3  origin_x, origin_y, cell_size
//   offset 44  payload  C*H*W values, index (c * H + j) * W + k
// Masks are stored with C = 1.
//
// Scene JSON: {"timestamp": s, "boxes": [{"cx","cy","heading","length",
// "width","vx","vy"}]} in SI units. Config JSON: flat object whose keys are
// the DistillConfig fields (grid fields prefixed "grid_"); unknown keys are
// rejected.
#ifndef RCTD_IO_HPP
#define RCTD_IO_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "rctd/config.hpp"
#include "rctd/grid.hpp"
#include "rctd/synth.hpp"

namespace rctd {

enum class GridDtype : std::uint16_t { f32 = 1, f64 = 2 };

inline constexpr std::uint16_t kGridFormatVersion = 1;

struct GridFile {
    GridSpec spec;
    std::int64_t channels = 1;
    Matrix<double> data;  ///< channels x (H*W), same layout as FeatureGrid
    GridDtype dtype = GridDtype::f32;
};

GridFile grid_file_from(const MaskGrid<double>& mask, GridDtype dtype = GridDtype::f32);
GridFile grid_file_from(const FeatureGrid<double>& features, const GridSpec& spec, GridDtype dtype = GridDtype::f32);
MaskGrid<double> mask_from(const GridFile& file);
FeatureGrid<double> features_from(const GridFile& file);

void write_grid(std::ostream& out, const GridFile& grid);
GridFile read_grid(std::istream& in);
void save_grid(const std::filesystem::path& path, const GridFile& grid);
GridFile load_grid(const std::filesystem::path& path);

nlohmann::json scene_to_json(const SceneFrame& frame);
SceneFrame scene_from_json(const nlohmann::json& j);
void save_scene(const std::filesystem::path& path, const SceneFrame& frame);
SceneFrame load_scene(const std::filesystem::path& path);

nlohmann::json config_to_json(const DistillConfig& cfg);
/// Missing keys keep their defaults; the result is validated.
DistillConfig config_from_json(const nlohmann::json& j);
DistillConfig load_config(const std::filesystem::path& path);

/// 8-bit binary PGM; pixel = round(clamp(value / scale, 0, 1) * 255), row 0 first.
void write_pgm(std::ostream& out, const RowMajorMatrix<double>& values, double scale = 1.0);
void save_pgm(const std::filesystem::path& path, const RowMajorMatrix<double>& values, double scale = 1.0);

/// Per-cell channel L2 norm as an H x W field.
RowMajorMatrix<double> channel_norms(const FeatureGrid<double>& features);

/// Writes text to `path`, throwing DataError when the file cannot be written.
void save_text(const std::filesystem::path& path, const std::string& text);

}  // namespace rctd

#endif  // RCTD_IO_HPP
