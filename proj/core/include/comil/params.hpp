#pragma once

#include <cstdint>
#include <functional>

#include "comil/linalg.hpp"

namespace comil {

// All trainable tensors of the MIL network. Declaration order is also the
// checkpoint serialization order.
struct ModelParams {
    Mat64 feat1_w; // d x d_in
    Vec64 feat1_b; // d
    Mat64 feat2_w; // d x d
    Vec64 feat2_b; // d
    Mat64 att_proj;  // att_dim x d, projects features into attention space
    Vec64 att_score; // att_dim, maps projected features to a scalar score
    Mat64 head_w; // hidden x d
    Vec64 head_b; // hidden
    Mat64 out_w; // num_classes x hidden, grows with expand_head
    Vec64 out_b; // num_classes

    template <typename F>
    void for_each_tensor(F&& f) {
        f(feat1_w.data);
        f(feat1_b);
        f(feat2_w.data);
        f(feat2_b);
        f(att_proj.data);
        f(att_score);
        f(head_w.data);
        f(head_b);
        f(out_w.data);
        f(out_b);
    }

    template <typename F>
    void for_each_tensor(F&& f) const {
        f(feat1_w.data);
        f(feat1_b);
        f(feat2_w.data);
        f(feat2_b);
        f(att_proj.data);
        f(att_score);
        f(head_w.data);
        f(head_b);
        f(out_w.data);
        f(out_b);
    }

    std::size_t coordinate_count() const;

    bool operator==(const ModelParams&) const = default;
};

// Per-parameter gradient tensors, shape-congruent with a ModelParams.
using Gradients = ModelParams;

Gradients zeros_like(const ModelParams& p);

bool shape_congruent(const ModelParams& a, const ModelParams& b);

// p <- p - lr * g, elementwise on one tensor.
void sgd_step(Vec64& params, const Vec64& grads, double lr);

// p <- p - lr * g over every tensor of the set.
void sgd_step(ModelParams& params, const Gradients& grads, double lr);

// Central differences (f(p+eps) - f(p-eps)) / (2 eps) per coordinate.
Vec64 finite_diff_grad(const std::function<double(const Vec64&)>& f,
                       const Vec64& at, double eps = 1e-5);

Gradients finite_diff_grad(const std::function<double(const ModelParams&)>& f,
                           const ModelParams& at, double eps = 1e-5);

// ||a - b|| / max(||a||, ||b||, floor); the gradient-check metric.
double relative_error(const Gradients& a, const Gradients& b);

} // namespace comil
