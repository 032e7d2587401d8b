#pragma once

// Small MLP with hand-written forward/backward passes. The body maps inputs
// to the penultimate features phi; the LinearHead scores classes from phi.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pmmkit/error.hpp"
#include "pmmkit/margin.hpp"
#include "pmmkit/numkernel.hpp"
#include "pmmkit/objective.hpp"

namespace pmmkit {

enum class Activation : std::uint32_t { identity = 0, relu = 1, tanh = 2 };

inline std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    fail(ErrorCategory::config, "unknown activation '" + std::string(s) + "'");
}

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::relu: return z > 0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
    }
    return z;
}

/// d(activation)/dz expressed through the pre-activation z and output h.
inline double activate_derivative(Activation a, double z, double h) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return z > 0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - h * h;
    }
    return 1.0;
}

struct AffineLayer {
    Mat W;  // out x in
    Vec b;  // out
    Activation activation = Activation::relu;

    std::size_t in_dim() const noexcept { return W.cols(); }
    std::size_t out_dim() const noexcept { return W.rows(); }

    bool operator==(const AffineLayer&) const = default;
};

struct Mlp {
    std::vector<AffineLayer> body;
    LinearHead head;

    std::size_t input_dim() const noexcept { return body.empty() ? head.dim() : body.front().in_dim(); }
    std::size_t feature_dim() const noexcept { return head.dim(); }
    std::size_t num_classes() const noexcept { return head.num_classes(); }

    void validate() const {
        head.validate();
        for (std::size_t l = 0; l < body.size(); ++l) {
            const auto& layer = body[l];
            if (layer.b.size() != layer.out_dim())
                fail(ErrorCategory::dimension, "layer " + std::to_string(l) + " bias length mismatch");
            if (l + 1 < body.size())
                if (body[l + 1].in_dim() != layer.out_dim())
                    fail(ErrorCategory::dimension,
                         "layer " + std::to_string(l) + " output does not chain into layer " +
                         std::to_string(l + 1));
        }
        if (!body.empty())
            if (body.back().out_dim() != head.dim())
                fail(ErrorCategory::dimension,
                     "body output dim " + std::to_string(body.back().out_dim()) + " != head dim " +
                     std::to_string(head.dim()));
    }

    std::size_t parameter_count() const {
        std::size_t n = head.W.data().size() + head.b.size();
        for (const auto& l : body) n += l.W.data().size() + l.b.size();
        return n;
    }

    bool operator==(const Mlp&) const = default;
};

/// Architecture: input -> hidden[0] -> ... -> hidden[n-1] -> classes.
struct MlpShape {
    std::size_t input_dim = 2;
    std::vector<std::size_t> hidden;
    std::vector<Activation> activations;  // one per hidden layer
    std::size_t num_classes = 2;
};

inline Mlp init(const MlpShape& shape, std::uint64_t seed) {
    require(shape.input_dim >= 1, ErrorCategory::invalid_argument, "input dim must be >= 1");
    require(shape.num_classes >= 2, ErrorCategory::invalid_argument, "need at least 2 classes");
    require(shape.activations.size() == shape.hidden.size(), ErrorCategory::invalid_argument,
            "one activation per hidden layer required");
    RngStream rng(seed);
    auto fill = [&rng](Mat& w, double bound) {
        for (double& x : w.data()) x = rng.uniform(-bound, bound);
    };
    Mlp model;
    std::size_t fan_in = shape.input_dim;
    for (std::size_t l = 0; l < shape.hidden.size(); ++l) {
        const std::size_t fan_out = shape.hidden[l];
        require(fan_out >= 1, ErrorCategory::invalid_argument, "hidden width must be >= 1");
        AffineLayer layer{Mat(fan_out, fan_in), Vec(fan_out, 0.0), shape.activations[l]};
        const double bound = layer.activation == Activation::relu
                                  ? std::sqrt(6.0 / static_cast<double>(fan_in))
                                  : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        fill(layer.W, bound);
        model.body.push_back(std::move(layer));
        fan_in = fan_out;
    }
    model.head.W = Mat(shape.num_classes, fan_in);
    model.head.b = Vec(shape.num_classes, 0.0);
    fill(model.head.W, std::sqrt(6.0 / static_cast<double>(fan_in + shape.num_classes)));
    return model;
}

struct ForwardTrace {
    Mat input;
    std::vector<Mat> pre;   // per body layer, before activation
    std::vector<Mat> post;  // per body layer, after activation
    Mat features;
    ScoreMatrix scores;
};

inline ForwardTrace forward(const Mlp& model, const Mat& x) {
    model.validate();
    if (x.cols() != model.input_dim())
        fail(ErrorCategory::dimension,
             "input " + x.shape() + " does not match model input dim " + std::to_string(model.input_dim()));
    ForwardTrace t;
    t.input = x;
    const Mat* h = &t.input;
    for (const auto& layer : model.body) {
        Mat z(h->rows(), layer.out_dim());
        Mat a(h->rows(), layer.out_dim());
        for (std::size_t i = 0; i < h->rows(); ++i) {
            const auto in = h->row(i);
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const double v = dot(layer.W.row(o), in) + layer.b[o];
                z(i, o) = v;
                a(i, o) = activate(layer.activation, v);
            }
        }
        t.pre.push_back(std::move(z));
        t.post.push_back(std::move(a));
        h = &t.post.back();
    }
    t.features = *h;
    t.scores = score_batch(model.head, t.features);
    return t;
}

inline Mat extract_features(const Mlp& model, const Mat& x) { return forward(model, x).features; }

struct LayerGradient {
    Mat dW;
    Vec db;
};

struct ModelGradients {
    std::vector<LayerGradient> body;
    LayerGradient head;
};

/// Chain rule from score gradients (plus extra feature gradients) down to
/// every parameter.
inline ModelGradients backward(const Mlp& model, const ForwardTrace& trace, const Mat& d_scores,
                               const Mat& d_phi_extra) {
    require(trace.pre.size() == model.body.size() && trace.features.cols() == model.feature_dim(),
            ErrorCategory::dimension, "trace does not belong to this model");
    if (!(d_phi_extra.rows() == trace.features.rows() && d_phi_extra.cols() == trace.features.cols()))
        fail(ErrorCategory::dimension,
             "extra feature gradient " + d_phi_extra.shape() + " != features " + trace.features.shape());

    GradientSet hg = head_backward(model.head, trace.features, d_scores);
    for (std::size_t i = 0; i < hg.dPhi.data().size(); ++i) hg.dPhi.data()[i] += d_phi_extra.data()[i];

    ModelGradients g;
    g.head = {std::move(hg.dW), std::move(hg.db)};
    g.body.resize(model.body.size());

    Mat upstream = std::move(hg.dPhi);
    for (std::size_t l = model.body.size(); l-- > 0;) {
        const auto& layer = model.body[l];
        const Mat& z = trace.pre[l];
        const Mat& a = trace.post[l];
        const Mat& in = l == 0 ? trace.input : trace.post[l - 1];
        Mat dz(z.rows(), z.cols());
        for (std::size_t i = 0; i < dz.data().size(); ++i)
            dz.data()[i] = upstream.data()[i] * activate_derivative(layer.activation, z.data()[i], a.data()[i]);

        LayerGradient lg{Mat(layer.out_dim(), layer.in_dim()), Vec(layer.out_dim(), 0.0)};
        Mat d_in(in.rows(), in.cols());
        for (std::size_t i = 0; i < dz.rows(); ++i) {
            const auto x = in.row(i);
            auto dx = d_in.row(i);
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const double gz = dz(i, o);
                auto dw = lg.dW.row(o);
                const auto w = layer.W.row(o);
                for (std::size_t t = 0; t < layer.in_dim(); ++t) {
                    dw[t] += gz * x[t];
                    dx[t] += gz * w[t];
                }
                lg.db[o] += gz;
            }
        }
        g.body[l] = std::move(lg);
        upstream = std::move(d_in);
    }
    return g;
}

/// Plain SGD: p <- p - lr * grad_p.
inline void sgd_step(Mlp& model, const ModelGradients& grads, double lr) {
    require(lr > 0, ErrorCategory::invalid_argument, "learning rate must be > 0");
    require(grads.body.size() == model.body.size(), ErrorCategory::dimension, "gradient/model layer mismatch");
    auto update = [lr](std::vector<double>& p, const std::vector<double>& g) {
        require(p.size() == g.size(), ErrorCategory::dimension, "gradient/parameter size mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    };
    for (std::size_t l = 0; l < model.body.size(); ++l) {
        update(model.body[l].W.data(), grads.body[l].dW.data());
        update(model.body[l].b, grads.body[l].db);
    }
    update(model.head.W.data(), grads.head.dW.data());
    update(model.head.b, grads.head.db);
}

/// Visits every parameter buffer in a fixed order: body layers (W then b),
/// then the head (W then b).
template <typename ModelT, typename Fn>
void for_each_parameter_buffer(ModelT& model, Fn&& fn) {
    for (auto& layer : model.body) {
        fn(layer.W.data());
        fn(layer.b);
    }
    fn(model.head.W.data());
    fn(model.head.b);
}

template <typename GradsT, typename Fn>
void for_each_gradient_buffer(GradsT& grads, Fn&& fn) {
    for (auto& layer : grads.body) {
        fn(layer.dW.data());
        fn(layer.db);
    }
    fn(grads.head.dW.data());
    fn(grads.head.db);
}

}  // namespace pmmkit
