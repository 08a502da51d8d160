#include "comil/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "comil/rng.hpp"

namespace comil {

double classification_loss(const Vec64& logits, std::size_t target) {
    if (target >= logits.size())
        throw ContractError("classification_loss: target " + std::to_string(target) +
                            " out of range for " + std::to_string(logits.size()) +
                            " logits");
    return log_sum_exp(logits) - logits[target];
}

double distillation_loss(const Vec64& old_logits, const Vec64& new_logits,
                         std::size_t old_class_count) {
    if (old_class_count > old_logits.size() || old_class_count > new_logits.size())
        throw ContractError("distillation_loss: old_class_count " +
                            std::to_string(old_class_count) + " exceeds logits (" +
                            std::to_string(old_logits.size()) + ", " +
                            std::to_string(new_logits.size()) + ")");
    double loss = 0.0;
    for (std::size_t j = 0; j < old_class_count; ++j) {
        const double soft = sigmoid(old_logits[j]);
        // -[s log S(x) + (1-s) log(1-S(x))] in log-sum-exp form
        loss += soft * softplus(-new_logits[j]) + (1.0 - soft) * softplus(new_logits[j]);
    }
    return loss;
}

namespace {

// dL/dlogits for cls + dist on one bag.
Vec64 logit_gradient(const Vec64& logits, std::size_t target,
                     const Vec64* old_logits, std::size_t old_class_count) {
    Vec64 g = softmax(logits);
    g[target] -= 1.0;
    if (old_logits != nullptr) {
        for (std::size_t j = 0; j < old_class_count; ++j)
            g[j] += sigmoid(logits[j]) - sigmoid((*old_logits)[j]);
    }
    return g;
}

// Backpropagates dL/dlogits through one bag's forward trace.
Gradients backward(const MilModel& model, const Bag& bag, const ForwardTrace& t,
                   const Vec64& g_logits) {
    const auto& p = model.params;
    const std::size_t n = bag.instances.size();
    Gradients g = zeros_like(p);

    // out layer
    add_outer(g.out_w, g_logits, t.head_hidden);
    g.out_b = g_logits;
    const Vec64 du = mat_tvec(p.out_w, g_logits);

    // head hidden layer
    Vec64 dp(du.size());
    for (std::size_t i = 0; i < du.size(); ++i)
        dp[i] = du[i] * (1.0 - t.head_hidden[i] * t.head_hidden[i]);
    add_outer(g.head_w, dp, t.bag_feature);
    g.head_b = dp;
    const Vec64 dz = mat_tvec(p.head_w, dp);

    // pooling: z = sum_i alpha_i h_i
    Vec64 d_alpha(n);
    std::vector<Vec64> d_h(n, Vec64(model.dims.feat, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        d_alpha[i] = dot(t.features[i], dz);
        for (std::size_t k = 0; k < dz.size(); ++k) d_h[i][k] = t.attentions[i] * dz[k];
    }

    // softmax over attention scores
    const double weighted = dot(t.attentions, d_alpha);
    Vec64 d_score(n);
    for (std::size_t i = 0; i < n; ++i)
        d_score[i] = t.attentions[i] * (d_alpha[i] - weighted);

    // attention: score_i = att_score . tanh(att_proj h_i)
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < p.att_score.size(); ++k)
            g.att_score[k] += d_score[i] * t.att_proj[i][k];
        Vec64 dq(p.att_proj.rows);
        for (std::size_t k = 0; k < dq.size(); ++k) {
            const double tk = t.att_proj[i][k];
            dq[k] = d_score[i] * p.att_score[k] * (1.0 - tk * tk);
        }
        add_outer(g.att_proj, dq, t.features[i]);
        const Vec64 back = mat_tvec(p.att_proj, dq);
        for (std::size_t k = 0; k < back.size(); ++k) d_h[i][k] += back[k];
    }

    // feature transform, per instance
    for (std::size_t i = 0; i < n; ++i) {
        Vec64 dr(model.dims.feat);
        for (std::size_t k = 0; k < dr.size(); ++k)
            dr[k] = d_h[i][k] * (1.0 - t.features[i][k] * t.features[i][k]);
        add_outer(g.feat2_w, dr, t.hidden1[i]);
        for (std::size_t k = 0; k < dr.size(); ++k) g.feat2_b[k] += dr[k];
        const Vec64 da = mat_tvec(p.feat2_w, dr);

        Vec64 ds(model.dims.feat);
        for (std::size_t k = 0; k < ds.size(); ++k)
            ds[k] = da[k] * (1.0 - t.hidden1[i][k] * t.hidden1[i][k]);
        add_outer(g.feat1_w, ds, bag.instances[i]);
        for (std::size_t k = 0; k < ds.size(); ++k) g.feat1_b[k] += ds[k];
    }
    return g;
}

} // namespace

LossBreakdown combined_loss(const MilModel& model, const MilModel* frozen_prev,
                            const Bag& bag) {
    const std::size_t target = model.class_index(bag.label);
    const ForwardTrace t = forward_trace(model, bag);
    LossBreakdown out;
    out.cls = classification_loss(t.logits, target);
    if (frozen_prev != nullptr) {
        const ForwardTrace old_t = forward_trace(*frozen_prev, bag);
        out.dist = distillation_loss(old_t.logits, t.logits, frozen_prev->num_classes());
    }
    out.total = out.cls + out.dist;
    return out;
}

Gradients combined_loss_grad(const MilModel& model, const MilModel* frozen_prev,
                             const Bag& bag, LossBreakdown* breakdown) {
    const std::size_t target = model.class_index(bag.label);
    const ForwardTrace t = forward_trace(model, bag);

    Vec64 old_logits;
    std::size_t old_count = 0;
    if (frozen_prev != nullptr) {
        old_logits = forward_trace(*frozen_prev, bag).logits;
        old_count = frozen_prev->num_classes();
    }
    if (breakdown != nullptr) {
        breakdown->cls = classification_loss(t.logits, target);
        breakdown->dist = frozen_prev != nullptr
                              ? distillation_loss(old_logits, t.logits, old_count)
                              : 0.0;
        breakdown->total = breakdown->cls + breakdown->dist;
    }
    const Vec64 g_logits = logit_gradient(
        t.logits, target, frozen_prev != nullptr ? &old_logits : nullptr, old_count);
    return backward(model, bag, t, g_logits);
}

void train_task(MilModel& model, const MilModel* frozen_prev,
                const std::vector<Bag>& train_bags, const TrainConfig& cfg) {
    if (cfg.epochs == 0) throw ContractError("train_task: epochs must be >= 1");
    if (cfg.lr < 0.0 || !std::isfinite(cfg.lr))
        throw ContractError("train_task: lr must be finite and non-negative");
    const MilModel* prev = cfg.distill_enabled ? frozen_prev : nullptr;
    for (const Bag& bag : train_bags)
        model.class_index(bag.label); // head must cover every label up front

    std::vector<std::size_t> order(train_bags.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 rng(cfg.shuffle_seed + epoch);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t bi : order) {
            const Bag& bag = train_bags[bi];
            LossBreakdown loss;
            const Gradients g = combined_loss_grad(model, prev, bag, &loss);
            if (!std::isfinite(loss.total))
                throw DivergenceError("non-finite loss at epoch " +
                                      std::to_string(epoch + 1) + ", bag " + bag.bag_id);
            sgd_step(model.params, g, cfg.lr);
        }
    }
}

} // namespace comil
