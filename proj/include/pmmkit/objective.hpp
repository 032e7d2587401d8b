#pragma once

// Training objective over a batch of penultimate-layer features:
//
//   total = alpha * sum_i R_i + sum_i C_i
//
// C_i is hinge (max(0, 1 - xi_i)) or cross-entropy (-log softmax(s_i)[y_i]).
// R_i depends on the regularizer; for the pairwise-margin regularizer it is
// ||w_y - w_m||^2 * ||phi_max||^2 where m is the competitive class of sample i
// and phi_max is the largest feature vector of the batch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pmmkit/error.hpp"
#include "pmmkit/margin.hpp"
#include "pmmkit/numkernel.hpp"

namespace pmmkit {

enum class RiskKind { hinge, cross_entropy };

enum class PhiMaxMode { stop_gradient, flow_gradient };

struct RegKind {
    enum class Tag { none, weight_decay, one_vs_all_l2, pmm };

    Tag tag = Tag::none;
    double coef = 0.0;  // weight_decay only

    static RegKind none() { return {}; }
    static RegKind weight_decay(double coef) {
        require(coef >= 0 && std::isfinite(coef), ErrorCategory::invalid_argument,
                "weight decay coefficient must be finite and >= 0");
        return {Tag::weight_decay, coef};
    }
    static RegKind one_vs_all_l2() { return {Tag::one_vs_all_l2, 0.0}; }
    static RegKind pmm() { return {Tag::pmm, 0.0}; }

    bool operator==(const RegKind&) const = default;
};

struct AlphaSchedule {
    enum class Kind { constant, linear };

    Kind kind = Kind::constant;
    double start = 1e-3;
    double end = 1e-3;
    std::size_t total_steps = 1;

    static AlphaSchedule constant(double a) {
        require(a >= 0, ErrorCategory::invalid_argument, "alpha must be >= 0");
        return {Kind::constant, a, a, 1};
    }
    static AlphaSchedule linear(double a0, double a1, std::size_t total_steps) {
        require(a0 >= 0 && a1 >= 0, ErrorCategory::invalid_argument, "alpha endpoints must be >= 0");
        require(total_steps >= 1, ErrorCategory::invalid_argument, "linear alpha needs total_steps >= 1");
        return {Kind::linear, a0, a1, total_steps};
    }

    bool operator==(const AlphaSchedule&) const = default;
};

struct ObjectiveConfig {
    RiskKind risk = RiskKind::cross_entropy;
    RegKind reg = RegKind::pmm();
    PhiMaxMode phi_max_mode = PhiMaxMode::stop_gradient;

    bool operator==(const ObjectiveConfig&) const = default;
};

struct ObjectiveValue {
    double risk_sum = 0.0;
    double reg_sum = 0.0;
    double total = 0.0;
    double alpha_used = 0.0;
};

/// Gradients of the objective w.r.t. head parameters and per-sample features.
struct GradientSet {
    Mat dW;
    Vec db;
    Mat dPhi;
};

/// Objective split for backprop: `d_scores` flows through the head like any
/// loss gradient; the reg_* parts are added directly.
struct ObjectivePartials {
    ObjectiveValue value;
    Mat d_scores;
    Mat reg_dW;
    Vec reg_db;
    Mat reg_dPhi;
};

inline double hinge_risk(double xi) { return std::max(0.0, 1.0 - xi); }

inline double ce_risk(std::span<const double> scores_row, ClassId y) {
    require(y < scores_row.size(), ErrorCategory::invalid_argument, "label out of range");
    // -log softmax(s)[y] = lse(s) - s_y; clamp the tiny negative rounding residue.
    return std::max(0.0, log_sum_exp(scores_row) - scores_row[y]);
}

inline double pmm_reg(const LinearHead& head, ClassId y, ClassId m, double phi_max_norm_sq) {
    require(y != m, ErrorCategory::invalid_argument, "pmm regularizer needs y != m");
    require(phi_max_norm_sq >= 0, ErrorCategory::invalid_argument, "phi_max_norm_sq must be >= 0");
    return squared_norm(difference(head.W.row(y), head.W.row(m))) * phi_max_norm_sq;
}

/// Sum of squared class weight norms (biases excluded).
inline double ova_reg(const LinearHead& head) { return squared_norm(head.W.data()); }

/// Largest row norm and its row (lowest index on ties).
inline std::pair<double, std::size_t> phi_max_norm(const Mat& features) {
    require(features.rows() >= 1, ErrorCategory::invalid_argument, "phi_max_norm of an empty batch");
    double best = -1.0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const double n = l2_norm(features.row(i));
        if (n > best) {
            best = n;
            idx = i;
        }
    }
    return {best, idx};
}

inline double alpha_at(const AlphaSchedule& schedule, std::size_t step) {
    if (schedule.kind == AlphaSchedule::Kind::constant) return schedule.start;
    const double t = static_cast<double>(std::min(step, schedule.total_steps)) /
                     static_cast<double>(schedule.total_steps);
    return schedule.start + (schedule.end - schedule.start) * t;
}

namespace detail {

inline void check_batch(const LinearHead& head, const Mat& features, std::span<const ClassId> labels) {
    head.validate();
    require(features.rows() >= 1, ErrorCategory::invalid_argument, "empty batch");
    if (features.cols() != head.dim())
        fail(ErrorCategory::dimension,
             "features " + features.shape() + " do not match head input dim " + std::to_string(head.dim()));
    if (labels.size() != features.rows())
        fail(ErrorCategory::dimension, "labels length " + std::to_string(labels.size()) + " != batch rows " +
             std::to_string(features.rows()));
    for (ClassId y : labels)
        if (y >= head.num_classes())
            fail(ErrorCategory::invalid_argument,
                 "label " + std::to_string(y) + " out of range for k=" + std::to_string(head.num_classes()));
}

}  // namespace detail

/// Value and gradient pieces in one pass. The competitive classes and the
/// phi_max row are fixed at the evaluation point.
inline ObjectivePartials objective_partials(const LinearHead& head, const Mat& features,
                                            std::span<const ClassId> labels, const ObjectiveConfig& cfg,
                                            double alpha) {
    detail::check_batch(head, features, labels);
    const std::size_t m = features.rows();
    const std::size_t k = head.num_classes();
    const std::size_t d = head.dim();

    ObjectivePartials out;
    out.d_scores = Mat(m, k);
    out.reg_dW = Mat(k, d);
    out.reg_db = Vec(k, 0.0);
    out.reg_dPhi = Mat(m, d);
    out.value.alpha_used = alpha;

    const ScoreMatrix scores = score_batch(head, features);

    double pmm_phi_sq = 0.0;
    std::size_t phi_max_row = 0;
    if (cfg.reg.tag == RegKind::Tag::pmm) {
        const auto [norm, row] = phi_max_norm(features);
        pmm_phi_sq = norm * norm;
        phi_max_row = row;
    }

    double risk_sum = 0.0;
    double reg_sum = 0.0;
    double pair_norm_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto s = scores.row(i);
        const ClassId y = labels[i];
        const ClassId mi = competitive_class(s, y);
        auto ds = out.d_scores.row(i);

        if (cfg.risk == RiskKind::cross_entropy) {
            risk_sum += ce_risk(s, y);
            const Vec p = softmax_stable(s);
            for (std::size_t j = 0; j < k; ++j) ds[j] = p[j] - (j == y ? 1.0 : 0.0);
        } else {
            const double xi = s[y] - s[mi];
            risk_sum += hinge_risk(xi);
            // Subgradient 0 at xi == 1.
            if (xi < 1.0) {
                ds[y] -= 1.0;
                ds[mi] += 1.0;
            }
        }

        if (cfg.reg.tag == RegKind::Tag::pmm) {
            const Vec w_diff = difference(head.W.row(y), head.W.row(mi));
            const double diff_sq = squared_norm(w_diff);
            reg_sum += diff_sq * pmm_phi_sq;
            pair_norm_sum += diff_sq;
            auto gy = out.reg_dW.row(y);
            auto gm = out.reg_dW.row(mi);
            for (std::size_t t = 0; t < d; ++t) {
                const double g = alpha * 2.0 * w_diff[t] * pmm_phi_sq;
                gy[t] += g;
                gm[t] -= g;
            }
        }
    }

    switch (cfg.reg.tag) {
        case RegKind::Tag::none:
            break;
        case RegKind::Tag::weight_decay: {
            reg_sum = cfg.reg.coef * (squared_norm(head.W.data()) + squared_norm(head.b));
            for (std::size_t i = 0; i < head.W.data().size(); ++i)
                out.reg_dW.data()[i] = alpha * cfg.reg.coef * 2.0 * head.W.data()[i];
            for (std::size_t j = 0; j < k; ++j) out.reg_db[j] = alpha * cfg.reg.coef * 2.0 * head.b[j];
            break;
        }
        case RegKind::Tag::one_vs_all_l2: {
            reg_sum = ova_reg(head);
            for (std::size_t i = 0; i < head.W.data().size(); ++i)
                out.reg_dW.data()[i] = alpha * 2.0 * head.W.data()[i];
            break;
        }
        case RegKind::Tag::pmm: {
            if (cfg.phi_max_mode == PhiMaxMode::flow_gradient) {
                // d(sum_i R_i)/d(phi_max) = 2 * phi_max * sum_i ||w_y - w_m||^2
                const auto phi = features.row(phi_max_row);
                auto g = out.reg_dPhi.row(phi_max_row);
                for (std::size_t t = 0; t < d; ++t) g[t] += alpha * 2.0 * phi[t] * pair_norm_sum;
            }
            break;
        }
    }

    out.value.risk_sum = risk_sum;
    out.value.reg_sum = reg_sum;
    out.value.total = alpha * reg_sum + risk_sum;
    return out;
}

inline ObjectiveValue objective_batch(const LinearHead& head, const Mat& features, std::span<const ClassId> labels,
                                      const ObjectiveConfig& cfg, double alpha) {
    return objective_partials(head, features, labels, cfg, alpha).value;
}

/// Backprop a score gradient through the head: dW = dS^T Phi, db = column
/// sums of dS, dPhi = dS W.
inline GradientSet head_backward(const LinearHead& head, const Mat& features, const Mat& d_scores) {
    if (!(d_scores.rows() == features.rows() && d_scores.cols() == head.num_classes()))
        fail(ErrorCategory::dimension, "score gradient " + d_scores.shape() + " does not match batch");
    const std::size_t k = head.num_classes();
    const std::size_t d = head.dim();
    GradientSet g{Mat(k, d), Vec(k, 0.0), Mat(features.rows(), d)};
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto phi = features.row(i);
        const auto ds = d_scores.row(i);
        auto dphi = g.dPhi.row(i);
        for (std::size_t j = 0; j < k; ++j) {
            if (ds[j] == 0.0) continue;
            auto dw = g.dW.row(j);
            const auto w = head.W.row(j);
            for (std::size_t t = 0; t < d; ++t) {
                dw[t] += ds[j] * phi[t];
                dphi[t] += ds[j] * w[t];
            }
            g.db[j] += ds[j];
        }
    }
    return g;
}

/// Adds the regularizer-only pieces of `parts` onto `g`.
inline void add_regularizer_gradients(GradientSet& g, const ObjectivePartials& parts) {
    for (std::size_t i = 0; i < g.dW.data().size(); ++i) g.dW.data()[i] += parts.reg_dW.data()[i];
    for (std::size_t j = 0; j < g.db.size(); ++j) g.db[j] += parts.reg_db[j];
    for (std::size_t i = 0; i < g.dPhi.data().size(); ++i) g.dPhi.data()[i] += parts.reg_dPhi.data()[i];
}

inline GradientSet objective_gradients(const LinearHead& head, const Mat& features, std::span<const ClassId> labels,
                                       const ObjectiveConfig& cfg, double alpha) {
    const ObjectivePartials parts = objective_partials(head, features, labels, cfg, alpha);
    GradientSet g = head_backward(head, features, parts.d_scores);
    add_regularizer_gradients(g, parts);
    return g;
}

}  // namespace pmmkit
