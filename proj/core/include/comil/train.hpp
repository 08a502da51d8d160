#pragma once

#include <cstdint>
#include <vector>

#include "comil/model.hpp"

namespace comil {

struct LossBreakdown {
    double cls = 0.0;
    double dist = 0.0;
    double total = 0.0;
};

struct TrainConfig {
    std::size_t epochs = 20;
    double lr = 0.01;
    std::uint64_t shuffle_seed = 0;
    bool distill_enabled = true;
};

// Negative log likelihood of the target class under softmax(logits).
double classification_loss(const Vec64& logits, std::size_t target);

// Binary cross-entropy per old class with the frozen model's sigmoid outputs
// as soft targets; zero when old_class_count is zero. Minimized exactly when
// sigmoid(new) equals sigmoid(old) on every old class.
double distillation_loss(const Vec64& old_logits, const Vec64& new_logits,
                         std::size_t old_class_count);

// cls + dist on one bag; frozen_prev null means no distillation (first task).
LossBreakdown combined_loss(const MilModel& model, const MilModel* frozen_prev,
                            const Bag& bag);

// Analytic gradient of combined_loss wrt every model parameter; also reports
// the loss values of the evaluated point when breakdown is non-null.
Gradients combined_loss_grad(const MilModel& model, const MilModel* frozen_prev,
                             const Bag& bag, LossBreakdown* breakdown = nullptr);

// Runs cfg.epochs passes of per-bag SGD over train_bags, reshuffling with
// shuffle_seed + epoch. frozen_prev enables distillation when
// cfg.distill_enabled is set. Throws DivergenceError naming epoch and bag on a
// non-finite loss.
void train_task(MilModel& model, const MilModel* frozen_prev,
                const std::vector<Bag>& train_bags, const TrainConfig& cfg);

} // namespace comil
