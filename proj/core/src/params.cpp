#include "comil/params.hpp"

#include <cmath>
#include <string>

namespace comil {

std::size_t ModelParams::coordinate_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const Vec64& t) { n += t.size(); });
    return n;
}

Gradients zeros_like(const ModelParams& p) {
    Gradients g = p;
    g.for_each_tensor([](Vec64& t) { std::fill(t.begin(), t.end(), 0.0); });
    return g;
}

bool shape_congruent(const ModelParams& a, const ModelParams& b) {
    return a.feat1_w.rows == b.feat1_w.rows && a.feat1_w.cols == b.feat1_w.cols &&
           a.feat1_b.size() == b.feat1_b.size() &&
           a.feat2_w.rows == b.feat2_w.rows && a.feat2_w.cols == b.feat2_w.cols &&
           a.feat2_b.size() == b.feat2_b.size() &&
           a.att_proj.rows == b.att_proj.rows && a.att_proj.cols == b.att_proj.cols &&
           a.att_score.size() == b.att_score.size() &&
           a.head_w.rows == b.head_w.rows && a.head_w.cols == b.head_w.cols &&
           a.head_b.size() == b.head_b.size() &&
           a.out_w.rows == b.out_w.rows && a.out_w.cols == b.out_w.cols &&
           a.out_b.size() == b.out_b.size();
}

void sgd_step(Vec64& params, const Vec64& grads, double lr) {
    if (lr < 0.0 || !std::isfinite(lr))
        throw ContractError("sgd_step: lr must be finite and non-negative");
    if (params.size() != grads.size())
        throw ContractError("sgd_step: param size " + std::to_string(params.size()) +
                            " vs grad size " + std::to_string(grads.size()));
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void sgd_step(ModelParams& params, const Gradients& grads, double lr) {
    if (lr < 0.0 || !std::isfinite(lr))
        throw ContractError("sgd_step: lr must be finite and non-negative");
    if (!shape_congruent(params, grads))
        throw ContractError("sgd_step: gradient shapes not congruent with parameters");
    std::vector<Vec64*> pt;
    params.for_each_tensor([&](Vec64& t) { pt.push_back(&t); });
    std::vector<const Vec64*> gt;
    grads.for_each_tensor([&](const Vec64& t) { gt.push_back(&t); });
    for (std::size_t t = 0; t < pt.size(); ++t) sgd_step(*pt[t], *gt[t], lr);
}

Vec64 finite_diff_grad(const std::function<double(const Vec64&)>& f,
                       const Vec64& at, double eps) {
    if (eps <= 0.0) throw ContractError("finite_diff_grad: eps must be positive");
    Vec64 grad(at.size(), 0.0);
    Vec64 probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        probe[i] = at[i] + eps;
        const double fp = f(probe);
        probe[i] = at[i] - eps;
        const double fm = f(probe);
        probe[i] = at[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw ContractError("finite_diff_grad: non-finite objective at coordinate " +
                                std::to_string(i));
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

Gradients finite_diff_grad(const std::function<double(const ModelParams&)>& f,
                           const ModelParams& at, double eps) {
    if (eps <= 0.0) throw ContractError("finite_diff_grad: eps must be positive");
    Gradients grad = zeros_like(at);
    ModelParams probe = at;

    std::vector<Vec64*> probe_tensors;
    probe.for_each_tensor([&](Vec64& t) { probe_tensors.push_back(&t); });
    std::vector<Vec64*> grad_tensors;
    grad.for_each_tensor([&](Vec64& t) { grad_tensors.push_back(&t); });

    for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
        Vec64& pt = *probe_tensors[t];
        Vec64& gt = *grad_tensors[t];
        for (std::size_t i = 0; i < pt.size(); ++i) {
            const double orig = pt[i];
            pt[i] = orig + eps;
            const double fp = f(probe);
            pt[i] = orig - eps;
            const double fm = f(probe);
            pt[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw ContractError("finite_diff_grad: non-finite objective");
            gt[i] = (fp - fm) / (2.0 * eps);
        }
    }
    return grad;
}

double relative_error(const Gradients& a, const Gradients& b) {
    if (!shape_congruent(a, b))
        throw ContractError("relative_error: gradient shapes not congruent");
    double diff2 = 0.0, na2 = 0.0, nb2 = 0.0;
    std::vector<const Vec64*> at, bt;
    a.for_each_tensor([&](const Vec64& t) { at.push_back(&t); });
    b.for_each_tensor([&](const Vec64& t) { bt.push_back(&t); });
    for (std::size_t t = 0; t < at.size(); ++t) {
        for (std::size_t i = 0; i < at[t]->size(); ++i) {
            const double x = (*at[t])[i];
            const double y = (*bt[t])[i];
            diff2 += (x - y) * (x - y);
            na2 += x * x;
            nb2 += y * y;
        }
    }
    const double denom = std::max({std::sqrt(na2), std::sqrt(nb2), 1e-12});
    return std::sqrt(diff2) / denom;
}

} // namespace comil
