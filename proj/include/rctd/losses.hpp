// losses.hpp
//
// Feature-mimicking and relational distillation losses with analytic
// gradients with respect to the student tensors. Teacher inputs never
// receive gradients.
//
// Reductions: per-cell terms may be evaluated in parallel but are always
// summed sequentially in row-major cell order, so results do not depend on
// the thread count.
#ifndef RCTD_LOSSES_HPP
#define RCTD_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "rctd/config.hpp"
#include "rctd/grid.hpp"

namespace rctd {

template <typename Scalar>
struct LossValue {
    Scalar value = Scalar(0);
    Matrix<Scalar> grad;      ///< d value / d student, channels x cells
    std::int64_t active = 0;  ///< nonzero mask cells, or K for the relational loss

    Scalar grad_norm() const { return grad.size() == 0 ? Scalar(0) : grad.norm(); }
};

enum class NormKind { euclidean, squared };

// ---------------------------------------------------------------------------
// 1x1 channel projection

template <typename Scalar>
FeatureGrid<Scalar> channel_project(const FeatureGrid<Scalar>& student, const Matrix<Scalar>& weights,
                                    const Vector<Scalar>& bias) {
    if (weights.cols() != student.channels() || bias.size() != weights.rows()) {
        throw DataError("channel_project: weights are " + std::to_string(weights.rows()) + "x" +
                        std::to_string(weights.cols()) + ", bias " + std::to_string(bias.size()) +
                        ", input has " + std::to_string(student.channels()) + " channels");
    }
    FeatureGrid<Scalar> out{student.height, student.width, Matrix<Scalar>{}, student.level,
                            FeatureSource::student_projected};
    out.data.noalias() = weights * student.data;
    out.data.colwise() += bias;
    return out;
}

template <typename Scalar>
struct ProjectionGrad {
    Matrix<Scalar> weights;
    Vector<Scalar> bias;
    Matrix<Scalar> input;  ///< channels x cells, shaped like the projection input
};

/// Back-maps d loss / d output through out = W * in + b.
template <typename Scalar>
ProjectionGrad<Scalar> channel_project_backward(const FeatureGrid<Scalar>& input, const Matrix<Scalar>& weights,
                                                const Matrix<Scalar>& grad_out) {
    if (grad_out.rows() != weights.rows() || grad_out.cols() != input.cells() ||
        weights.cols() != input.channels()) {
        throw DataError("channel_project_backward: shape mismatch");
    }
    ProjectionGrad<Scalar> g;
    g.weights.noalias() = grad_out * input.data.transpose();
    g.bias = grad_out.rowwise().sum();
    g.input.noalias() = weights.transpose() * grad_out;
    return g;
}

// ---------------------------------------------------------------------------
// Masked feature mimicking

/// (1/N) * sum_{j,k} W[j,k] * ||teacher[:,j,k] - student[:,j,k]||, squared or
/// not, where N counts the nonzero mask cells. An empty mask gives zero loss
/// and zero gradient. The unsquared norm uses subgradient 0 at zero difference.
template <typename Scalar>
LossValue<Scalar> masked_feature_loss(const FeatureGrid<Scalar>& teacher, const FeatureGrid<Scalar>& student,
                                      const MaskGrid<Scalar>& mask, NormKind norm) {
    require_same_shape(teacher, student, "masked_feature_loss");
    require_mask_matches(student, mask, "masked_feature_loss");

    LossValue<Scalar> out;
    out.grad = Matrix<Scalar>::Zero(student.channels(), student.cells());
    out.active = mask.active_count();
    if (out.active == 0) return out;

    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(out.active);
    const std::int64_t cells = student.cells();
    std::vector<Scalar> terms(static_cast<std::size_t>(cells), Scalar(0));
#pragma omp parallel for schedule(static) if (cells > 16384)
    for (std::int64_t i = 0; i < cells; ++i) {
        const Scalar w = mask.values(i / student.width, i % student.width);
        if (w == Scalar(0)) continue;
        const auto diff = (teacher.data.col(i) - student.data.col(i)).eval();
        if (norm == NormKind::squared) {
            terms[static_cast<std::size_t>(i)] = w * diff.squaredNorm();
            out.grad.col(i) = (Scalar(-2) * w * inv_n) * diff;
        } else {
            const Scalar len = diff.norm();
            terms[static_cast<std::size_t>(i)] = w * len;
            if (len > Scalar(0)) out.grad.col(i) = (-w * inv_n / len) * diff;
        }
    }
    out.value = std::accumulate(terms.begin(), terms.end(), Scalar(0)) * inv_n;
    return out;
}

/// Range-azimuth loss; unsquared per-cell channel norm unless `norm` says otherwise.
template <typename Scalar>
LossValue<Scalar> rakd_loss(const FeatureGrid<Scalar>& teacher, const FeatureGrid<Scalar>& student_proj,
                            const MaskGrid<Scalar>& w_ra, NormKind norm = NormKind::euclidean) {
    return masked_feature_loss(teacher, student_proj, w_ra, norm);
}

/// Temporal loss on history-aligned student features; squared per-cell norm.
template <typename Scalar>
LossValue<Scalar> tkd_loss(const FeatureGrid<Scalar>& teacher, const FeatureGrid<Scalar>& student_aligned,
                           const MaskGrid<Scalar>& w_t) {
    return masked_feature_loss(teacher, student_aligned, w_t, NormKind::squared);
}

/// Masked mean squared error per channel, used as a training diagnostic.
template <typename Scalar>
Scalar masked_mse(const FeatureGrid<Scalar>& teacher, const FeatureGrid<Scalar>& student,
                  const MaskGrid<Scalar>& mask) {
    require_same_shape(teacher, student, "masked_mse");
    require_mask_matches(student, mask, "masked_mse");
    Scalar sum(0);
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < student.cells(); ++i) {
        if (mask.values(i / student.width, i % student.width) == Scalar(0)) continue;
        sum += (teacher.data.col(i) - student.data.col(i)).squaredNorm();
        ++n;
    }
    return n == 0 ? Scalar(0) : sum / static_cast<Scalar>(n * student.channels());
}

// ---------------------------------------------------------------------------
// Relational distillation

/// Cells whose best class score exceeds tau_cls, in row-major order. When more
/// than k_max qualify, the k_max highest scores are kept (earlier cells win
/// ties) and returned in row-major order.
template <typename Scalar>
std::vector<CellIndex> select_confident_positions(const FeatureGrid<Scalar>& cls_scores, Scalar tau_cls,
                                                  std::int64_t k_max = 512) {
    if (k_max < 1) throw std::invalid_argument("select_confident_positions: k_max must be >= 1");
    const Vector<Scalar> best = cls_scores.data.colwise().maxCoeff().transpose();
    std::vector<std::int64_t> picked;
    for (std::int64_t i = 0; i < best.size(); ++i) {
        if (best(i) > tau_cls) picked.push_back(i);
    }
    if (static_cast<std::int64_t>(picked.size()) > k_max) {
        std::stable_sort(picked.begin(), picked.end(),
                         [&](std::int64_t a, std::int64_t b) { return best(a) > best(b); });
        picked.resize(static_cast<std::size_t>(k_max));
        std::sort(picked.begin(), picked.end());
    }
    std::vector<CellIndex> out;
    out.reserve(picked.size());
    for (std::int64_t i : picked) out.push_back({i / cls_scores.width, i % cls_scores.width});
    return out;
}

template <typename Scalar>
struct AffinityMap {
    Matrix<Scalar> values;  ///< K x K cosine similarities

    std::int64_t size() const { return values.rows(); }
    bool empty() const { return values.size() == 0; }
};

/// Channel vectors at the given cells, one column per position.
template <typename Scalar>
Matrix<Scalar> gather_positions(const FeatureGrid<Scalar>& features, std::span<const CellIndex> positions) {
    Matrix<Scalar> out(features.channels(), static_cast<std::int64_t>(positions.size()));
    for (std::size_t a = 0; a < positions.size(); ++a) {
        const CellIndex& p = positions[a];
        if (p.row < 0 || p.row >= features.height || p.col < 0 || p.col >= features.width) {
            throw DataError("gather_positions: position outside the feature grid");
        }
        out.col(static_cast<std::int64_t>(a)) = features.cell(p.row, p.col);
    }
    return out;
}

namespace detail {

// Unit columns of f; zero columns stay zero and are flagged in `nonzero`.
template <typename Scalar>
Matrix<Scalar> unit_columns(const Matrix<Scalar>& f, Vector<Scalar>& norms, std::vector<bool>& nonzero) {
    norms = f.colwise().norm().transpose();
    nonzero.assign(static_cast<std::size_t>(f.cols()), false);
    Matrix<Scalar> u = Matrix<Scalar>::Zero(f.rows(), f.cols());
    for (std::int64_t a = 0; a < f.cols(); ++a) {
        if (norms(a) > Scalar(0)) {
            u.col(a) = f.col(a) / norms(a);
            nonzero[static_cast<std::size_t>(a)] = true;
        }
    }
    return u;
}

}  // namespace detail

/// Pairwise cosine similarities among the feature vectors at `positions`.
/// A zero vector has similarity 0 to every other vector and 1 to itself.
/// An empty position list yields an empty map.
template <typename Scalar>
AffinityMap<Scalar> affinity_map(const FeatureGrid<Scalar>& features, std::span<const CellIndex> positions) {
    const Matrix<Scalar> f = gather_positions(features, positions);
    Vector<Scalar> norms;
    std::vector<bool> nonzero;
    const Matrix<Scalar> u = detail::unit_columns(f, norms, nonzero);
    AffinityMap<Scalar> s;
    s.values.noalias() = u.transpose() * u;
    // the product is not bitwise symmetric; mirror the upper triangle
    s.values.template triangularView<Eigen::StrictlyLower>() = s.values.transpose();
    s.values.diagonal().setOnes();
    return s;
}

template <typename Scalar>
struct AffinityLoss {
    Scalar value = Scalar(0);
    Matrix<Scalar> grad_student;  ///< d value / d S_student, K x K
};

/// Mean absolute difference between the two affinity maps. Subgradient 0
/// where entries agree exactly.
template <typename Scalar>
AffinityLoss<Scalar> rdkd_loss(const AffinityMap<Scalar>& s_teacher, const AffinityMap<Scalar>& s_student) {
    if (s_teacher.size() != s_student.size()) {
        throw DataError("rdkd_loss: affinity maps differ in size (" + std::to_string(s_teacher.size()) +
                        " vs " + std::to_string(s_student.size()) + ")");
    }
    const std::int64_t k = s_student.size();
    AffinityLoss<Scalar> out;
    out.grad_student = Matrix<Scalar>::Zero(k, k);
    if (k == 0) return out;
    const Scalar inv_k2 = Scalar(1) / static_cast<Scalar>(k * k);
    Scalar sum(0);
    for (std::int64_t a = 0; a < k; ++a) {
        for (std::int64_t b = 0; b < k; ++b) {
            const Scalar d = s_student.values(a, b) - s_teacher.values(a, b);
            sum += std::abs(d);
            if (d > Scalar(0)) out.grad_student(a, b) = inv_k2;
            else if (d < Scalar(0)) out.grad_student(a, b) = -inv_k2;
        }
    }
    out.value = sum * inv_k2;
    return out;
}

/// Pulls d loss / d S back to the feature grid through the cosine
/// similarities. Diagonal entries are constant and contribute nothing.
template <typename Scalar>
Matrix<Scalar> affinity_backward(const FeatureGrid<Scalar>& features, std::span<const CellIndex> positions,
                                 const Matrix<Scalar>& grad_affinity) {
    const std::int64_t k = static_cast<std::int64_t>(positions.size());
    if (grad_affinity.rows() != k || grad_affinity.cols() != k) {
        throw DataError("affinity_backward: gradient is not K x K");
    }
    Matrix<Scalar> grad = Matrix<Scalar>::Zero(features.channels(), features.cells());
    if (k == 0) return grad;

    const Matrix<Scalar> f = gather_positions(features, positions);
    Vector<Scalar> norms;
    std::vector<bool> nonzero;
    const Matrix<Scalar> u = detail::unit_columns(f, norms, nonzero);

    Matrix<Scalar> g = grad_affinity;
    g.diagonal().setZero();
    for (std::int64_t a = 0; a < k; ++a) {
        if (!nonzero[static_cast<std::size_t>(a)]) {
            g.row(a).setZero();
            g.col(a).setZero();
        }
    }
    const Matrix<Scalar> grad_u = u * (g + g.transpose());
    for (std::int64_t a = 0; a < k; ++a) {
        if (!nonzero[static_cast<std::size_t>(a)]) continue;
        const auto ua = u.col(a);
        const auto ga = grad_u.col(a);
        const CellIndex& p = positions[static_cast<std::size_t>(a)];
        grad.col(features.flat_index(p.row, p.col)) += (ga - ua * ua.dot(ga)) / norms(a);
    }
    return grad;
}

/// Relational loss between teacher and student high-level features at the
/// selected positions, with the gradient on the student grid.
template <typename Scalar>
LossValue<Scalar> rdkd_loss(const FeatureGrid<Scalar>& teacher_high, const FeatureGrid<Scalar>& student_high,
                            std::span<const CellIndex> positions) {
    if (teacher_high.height != student_high.height || teacher_high.width != student_high.width) {
        throw DataError("rdkd_loss: teacher and student grids differ in spatial size");
    }
    const AffinityMap<Scalar> s_t = affinity_map(teacher_high, positions);
    const AffinityMap<Scalar> s_s = affinity_map(student_high, positions);
    const AffinityLoss<Scalar> l = rdkd_loss(s_t, s_s);
    LossValue<Scalar> out;
    out.value = l.value;
    out.grad = affinity_backward(student_high, positions, l.grad_student);
    out.active = static_cast<std::int64_t>(positions.size());
    return out;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
struct TotalLoss {
    Scalar value = Scalar(0);
    Matrix<Scalar> grad_ra;  ///< lambda_ra * d L_RA / d projected student
    Matrix<Scalar> grad_t;   ///< lambda_t * d L_T / d aligned student
    Matrix<Scalar> grad_rd;  ///< lambda_rd * d L_RD / d student high-level features
};

/// l_det + lambda_ra * L_RA + lambda_t * L_T + lambda_rd * L_RD. The three
/// gradients stay separate because they belong to different student tensors.
template <typename Scalar>
TotalLoss<Scalar> total_loss(Scalar l_det, const LossValue<Scalar>& l_ra, const LossValue<Scalar>& l_t,
                             const LossValue<Scalar>& l_rd, const DistillConfig& cfg) {
    const Scalar lra(cfg.lambda_ra), lt(cfg.lambda_t), lrd(cfg.lambda_rd);
    TotalLoss<Scalar> out;
    out.value = l_det + lra * l_ra.value + lt * l_t.value + lrd * l_rd.value;
    out.grad_ra = lra * l_ra.grad;
    out.grad_t = lt * l_t.grad;
    out.grad_rd = lrd * l_rd.grad;
    return out;
}

}  // namespace rctd

#endif  // RCTD_LOSSES_HPP
