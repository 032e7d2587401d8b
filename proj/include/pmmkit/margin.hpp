#pragma once

// Margin geometry of a multi-class linear scoring layer.
//
// A head scores class j as s_j(x) = w_j . x + b_j. The boundary between two
// classes p and q is the hyperplane where s_p = s_q, with normal w_p - w_q.
// Distances are signed: positive on the side where p wins.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pmmkit/error.hpp"
#include "pmmkit/numkernel.hpp"

namespace pmmkit {

/// Normals shorter than this are treated as "no boundary".
inline constexpr double kDegenerateNormEps = 1e-12;

/// Last fully-connected layer: row j of `W` is w_j, `b[j]` is b_j.
struct LinearHead {
    Mat W;
    Vec b;

    std::size_t num_classes() const noexcept { return W.rows(); }
    std::size_t dim() const noexcept { return W.cols(); }

    void validate() const {
        if (W.rows() < 2)
            fail(ErrorCategory::invalid_argument,
                 "head needs at least 2 classes, got " + std::to_string(W.rows()));
        require(W.cols() >= 1, ErrorCategory::invalid_argument, "head input dimension must be >= 1");
        if (b.size() != W.rows())
            fail(ErrorCategory::dimension,
                 "head bias length " + std::to_string(b.size()) + " != classes " + std::to_string(W.rows()));
    }

    /// Head with every weight and bias multiplied by `c`.
    LinearHead scaled(double c) const {
        LinearHead h = *this;
        for (double& x : h.W.data()) x *= c;
        for (double& x : h.b) x *= c;
        return h;
    }

    bool operator==(const LinearHead&) const = default;
};

/// m samples x k classes.
using ScoreMatrix = Mat;

struct MarginRecord {
    std::size_t sample_index = 0;
    ClassId j1 = 0;
    ClassId j2 = 1;
    double xi = 0.0;
    double mms = 0.0;
    bool boundary_exists = true;
};

inline ScoreMatrix score_batch(const LinearHead& head, const Mat& features) {
    head.validate();
    if (features.cols() != head.dim())
        fail(ErrorCategory::dimension,
             "features " + features.shape() + " do not match head input dim " + std::to_string(head.dim()));
    ScoreMatrix s(features.rows(), head.num_classes());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto phi = features.row(i);
        for (std::size_t j = 0; j < head.num_classes(); ++j) s(i, j) = dot(head.W.row(j), phi) + head.b[j];
    }
    return s;
}

inline std::vector<ClassId> predict(const ScoreMatrix& scores) {
    std::vector<ClassId> out(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) out[i] = argmax_tiebreak_low(scores.row(i));
    return out;
}

/// Highest-scoring class other than `y`.
inline ClassId competitive_class(std::span<const double> scores_row, ClassId y) {
    require(scores_row.size() >= 2, ErrorCategory::invalid_argument, "competitive class needs k >= 2");
    if (y >= scores_row.size())
        fail(ErrorCategory::invalid_argument,
             "label " + std::to_string(y) + " out of range for k=" + std::to_string(scores_row.size()));
    ClassId best = y == 0 ? 1 : 0;
    for (ClassId j = best + 1; j < scores_row.size(); ++j)
        if (j != y && scores_row[j] > scores_row[best]) best = j;
    return best;
}

/// s_y - s_m with m the competitive class.
inline double score_gap(std::span<const double> scores_row, ClassId y) {
    const ClassId m = competitive_class(scores_row, y);
    return scores_row[y] - scores_row[m];
}

namespace detail {

inline double signed_distance(double numerator, double normal_norm) {
    if (normal_norm < kDegenerateNormEps) {
        if (numerator > 0) return std::numeric_limits<double>::infinity();
        if (numerator < 0) return -std::numeric_limits<double>::infinity();
        return 0.0;
    }
    return numerator / normal_norm;
}

inline double pair_normal_norm(const LinearHead& head, ClassId p, ClassId q) {
    return l2_norm(difference(head.W.row(p), head.W.row(q)));
}

}  // namespace detail

/// Signed distance from x to the boundary between classes p and q.
/// Returns +-inf (or 0 on the boundary) when w_p and w_q coincide.
inline double pairwise_distance(const LinearHead& head, std::span<const double> x, ClassId p, ClassId q) {
    head.validate();
    require(p != q, ErrorCategory::invalid_argument, "pairwise distance needs p != q");
    require(p < head.num_classes() && q < head.num_classes(), ErrorCategory::invalid_argument,
            "class id out of range");
    if (x.size() != head.dim())
        fail(ErrorCategory::dimension,
             "point dim " + std::to_string(x.size()) + " != head dim " + std::to_string(head.dim()));
    const Vec w = difference(head.W.row(p), head.W.row(q));
    const double numerator = dot(w, x) + (head.b[p] - head.b[q]);
    return detail::signed_distance(numerator, l2_norm(w));
}

/// Minimal margin score: distance to the boundary between the two
/// top-scoring classes. Uses only the scores, never a label.
inline MarginRecord mms(std::span<const double> scores_row, const LinearHead& head) {
    if (scores_row.size() != head.num_classes())
        fail(ErrorCategory::dimension,
             "scores row length " + std::to_string(scores_row.size()) + " != classes " +
             std::to_string(head.num_classes()));
    MarginRecord r;
    const auto [j1, j2] = top2_tiebreak_low(scores_row);
    r.j1 = j1;
    r.j2 = j2;
    r.xi = scores_row[j1] - scores_row[j2];
    const double norm = detail::pair_normal_norm(head, j1, j2);
    if (norm < kDegenerateNormEps) {
        r.mms = std::numeric_limits<double>::infinity();
        r.boundary_exists = false;
    } else {
        r.mms = r.xi / norm;
    }
    return r;
}

/// Pairwise margin against the competitive class, in units of the largest
/// feature norm of the batch.
inline double normalized_feature_margin(const LinearHead& head, std::span<const double> phi, ClassId y,
                                        double phi_max_norm) {
    require(phi_max_norm > 0, ErrorCategory::invalid_argument, "phi_max_norm must be > 0");
    require(y < head.num_classes(), ErrorCategory::invalid_argument, "label out of range");
    Vec scores(head.num_classes());
    for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = dot(head.W.row(j), phi) + head.b[j];
    const ClassId m = competitive_class(scores, y);
    return pairwise_distance(head, phi, y, m) / phi_max_norm;
}

/// Distance to the one-vs-all boundary w_j . x + b_j = 0.
inline double one_vs_all_distance(const LinearHead& head, std::span<const double> x, ClassId j) {
    require(j < head.num_classes(), ErrorCategory::invalid_argument, "class id out of range");
    require(x.size() == head.dim(), ErrorCategory::dimension, "point dim does not match head");
    const auto w = head.W.row(j);
    return detail::signed_distance(dot(w, x) + head.b[j], l2_norm(w));
}

}  // namespace pmmkit
