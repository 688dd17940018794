// grid.hpp
//
// Dense BEV containers. MaskGrid stores an H x W weight field in row-major
// order. FeatureGrid stores a C x H x W tensor as a C x (H*W) Eigen matrix so
// that the channel vector of cell (j, k) is the contiguous column j*W + k.
#ifndef RCTD_GRID_HPP
#define RCTD_GRID_HPP

#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "rctd/config.hpp"

namespace rctd {

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct CellIndex {
    std::int64_t row;
    std::int64_t col;
    bool operator==(const CellIndex&) const = default;
};

template <typename Scalar>
struct MaskGrid {
    GridSpec grid;
    RowMajorMatrix<Scalar> values;

    static MaskGrid zeros(const GridSpec& grid) {
        grid.validate();
        return {grid, RowMajorMatrix<Scalar>::Zero(grid.height, grid.width)};
    }

    Scalar operator()(std::int64_t j, std::int64_t k) const { return values(j, k); }
    Scalar& operator()(std::int64_t j, std::int64_t k) { return values(j, k); }

    /// Number of nonzero cells.
    std::int64_t active_count() const { return (values.array() != Scalar(0)).count(); }
};

enum class FeatureLevel { low, high };
enum class FeatureSource { teacher, student, student_projected, student_aligned };

template <typename Scalar>
struct FeatureGrid {
    std::int64_t height = 0;
    std::int64_t width = 0;
    Matrix<Scalar> data;  // channels x (height * width)
    FeatureLevel level = FeatureLevel::low;
    FeatureSource source = FeatureSource::teacher;

    static FeatureGrid zeros(std::int64_t channels, std::int64_t height, std::int64_t width,
                             FeatureLevel level = FeatureLevel::low,
                             FeatureSource source = FeatureSource::teacher) {
        if (channels < 1 || height < 1 || width < 1) {
            throw std::invalid_argument("FeatureGrid: dimensions must be >= 1");
        }
        return {height, width, Matrix<Scalar>::Zero(channels, height * width), level, source};
    }

    std::int64_t channels() const { return data.rows(); }
    std::int64_t cells() const { return height * width; }
    std::int64_t flat_index(std::int64_t j, std::int64_t k) const { return j * width + k; }

    auto cell(std::int64_t j, std::int64_t k) { return data.col(flat_index(j, k)); }
    auto cell(std::int64_t j, std::int64_t k) const { return data.col(flat_index(j, k)); }

    Scalar operator()(std::int64_t c, std::int64_t j, std::int64_t k) const {
        return data(c, flat_index(j, k));
    }
    Scalar& operator()(std::int64_t c, std::int64_t j, std::int64_t k) { return data(c, flat_index(j, k)); }

    bool same_shape(const FeatureGrid& other) const {
        return channels() == other.channels() && height == other.height && width == other.width;
    }
};

template <typename Scalar>
void require_same_shape(const FeatureGrid<Scalar>& a, const FeatureGrid<Scalar>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DataError(std::string(what) + ": feature grids differ in shape (" +
                        std::to_string(a.channels()) + "x" + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + " vs " + std::to_string(b.channels()) + "x" +
                        std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
    }
}

template <typename Scalar>
void require_mask_matches(const FeatureGrid<Scalar>& f, const MaskGrid<Scalar>& m, const char* what) {
    if (m.values.rows() != f.height || m.values.cols() != f.width) {
        throw DataError(std::string(what) + ": mask is " + std::to_string(m.values.rows()) + "x" +
                        std::to_string(m.values.cols()) + " but features are " + std::to_string(f.height) +
                        "x" + std::to_string(f.width));
    }
}

}  // namespace rctd

#endif  // RCTD_GRID_HPP
