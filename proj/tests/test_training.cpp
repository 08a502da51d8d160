#include "comil/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "comil/engine.hpp"
#include "test_util.hpp"

using namespace comil;

namespace {

MilModel fixture_model(std::uint64_t seed, std::size_t d_in, std::size_t feat,
                       std::size_t att, std::size_t hidden,
                       const std::vector<int>& classes) {
    MilModel m = make_model(ModelDims{d_in, feat, att, hidden}, seed);
    expand_head(m, classes, seed + 17);
    return m;
}

Bag random_bag(std::mt19937_64& rng, std::size_t n, std::size_t d_in, int label) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Bag bag;
    bag.bag_id = "fixture_" + std::to_string(rng());
    bag.label = label;
    for (std::size_t i = 0; i < n; ++i) {
        Instance inst(d_in);
        for (double& x : inst) x = gauss(rng);
        bag.instances.push_back(std::move(inst));
    }
    return bag;
}

} // namespace

TEST(ClassificationLoss, UniformLogits) {
    EXPECT_NEAR(classification_loss({0.0, 0.0}, 0), std::log(2.0), 1e-12);
}

TEST(ClassificationLoss, SaturatedCorrectClass) {
    EXPECT_LT(classification_loss({20.0, -20.0}, 0), 1e-8);
}

TEST(ClassificationLoss, DirectEvaluation) {
    // -log(e^0 / (e^1 + e^0 + e^0))
    EXPECT_NEAR(classification_loss({1.0, 0.0, 0.0}, 1), 1.5514, 1e-4);
}

TEST(ClassificationLoss, TargetOutOfRangeIsContractError) {
    EXPECT_THROW(classification_loss({0.0, 0.0}, 2), ContractError);
}

TEST(ClassificationLoss, NonNegative) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> val(-30.0, 30.0);
    for (int trial = 0; trial < 200; ++trial) {
        Vec64 logits(1 + trial % 6);
        for (double& x : logits) x = val(rng);
        const std::size_t target = trial % logits.size();
        EXPECT_GE(classification_loss(logits, target), 0.0);
    }
}

TEST(DistillationLoss, EqualLogitsHitEntropyFloor) {
    EXPECT_NEAR(distillation_loss({0.0, 0.0}, {0.0, 0.0}, 2), 2.0 * std::log(2.0),
                1e-12);
}

TEST(DistillationLoss, NoOldClassesMeansZero) {
    EXPECT_EQ(distillation_loss({}, {1.0, -2.0}, 0), 0.0);
}

TEST(DistillationLoss, DirectEvaluation) {
    // s_old = 0.5, s_new = 0.75: -(0.5 ln 0.75 + 0.5 ln 0.25)
    EXPECT_NEAR(distillation_loss({0.0}, {std::log(3.0)}, 1), 0.8370, 1e-4);
}

TEST(DistillationLoss, CountBeyondLogitsIsContractError) {
    EXPECT_THROW(distillation_loss({0.0}, {0.0, 1.0}, 2), ContractError);
}

TEST(DistillationLoss, MinimizedAtMatchingSigmoids) {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> len(1, 6);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = len(rng);
        Vec64 old_logits(n), perturbed(n);
        for (std::size_t i = 0; i < n; ++i) {
            old_logits[i] = 3.0 * gauss(rng);
            perturbed[i] = old_logits[i] + gauss(rng);
        }
        const double floor = distillation_loss(old_logits, old_logits, n);
        const double moved = distillation_loss(old_logits, perturbed, n);
        EXPECT_GE(moved, floor);
    }
}

TEST(CombinedLoss, FirstTaskHasNoDistillation) {
    MilModel m = fixture_model(5, 4, 5, 3, 4, {0, 1});
    std::mt19937_64 rng(8);
    const Bag bag = random_bag(rng, 3, 4, 1);
    const LossBreakdown loss = combined_loss(m, nullptr, bag);
    EXPECT_EQ(loss.dist, 0.0);
    EXPECT_EQ(loss.total, loss.cls);
    EXPECT_GE(loss.cls, 0.0);
}

TEST(CombinedLoss, IdenticalPreviousModelGivesEntropyFloor) {
    MilModel m = fixture_model(6, 4, 5, 3, 4, {0, 1});
    std::mt19937_64 rng(9);
    const Bag bag = random_bag(rng, 4, 4, 0);
    const MilModel frozen = m;
    const LossBreakdown loss = combined_loss(m, &frozen, bag);

    const BagOutput out = forward(m, bag);
    double floor = 0.0;
    for (double logit : out.logits) {
        const double s = sigmoid(logit);
        floor += -(s * std::log(s) + (1.0 - s) * std::log(1.0 - s));
    }
    EXPECT_NEAR(loss.dist, floor, 1e-9);
    EXPECT_NEAR(loss.total, loss.cls + loss.dist, 1e-12);
}

// Straight-line recomputation of both loss terms on a seeded two-bag fixture.
TEST(CombinedLoss, MatchesStraightLineEvaluation) {
    MilModel prev = fixture_model(7, 4, 5, 3, 4, {0, 1});
    MilModel cur = prev;
    expand_head(cur, {2}, 99);
    std::mt19937_64 rng(10);
    for (int label : {0, 2}) {
        const Bag bag = random_bag(rng, 3, 4, label);
        const LossBreakdown loss = combined_loss(cur, &prev, bag);

        const Vec64 logits = forward(cur, bag).logits;
        const Vec64 old_logits = forward(prev, bag).logits;
        double max_logit = logits[0];
        for (double v : logits) max_logit = std::max(max_logit, v);
        double denom = 0.0;
        for (double v : logits) denom += std::exp(v - max_logit);
        const std::size_t target = cur.class_index(bag.label);
        const double cls = -(logits[target] - max_logit - std::log(denom));
        double dist = 0.0;
        for (std::size_t j = 0; j < old_logits.size(); ++j) {
            const double s = 1.0 / (1.0 + std::exp(-old_logits[j]));
            const double q = 1.0 / (1.0 + std::exp(-logits[j]));
            dist += -(s * std::log(q) + (1.0 - s) * std::log(1.0 - q));
        }
        EXPECT_NEAR(loss.cls, cls, 1e-9);
        EXPECT_NEAR(loss.dist, dist, 1e-9);
        EXPECT_NEAR(loss.total, cls + dist, 1e-9);
    }
}

TEST(CombinedLoss, UnknownLabelIsContractError) {
    MilModel m = fixture_model(11, 4, 5, 3, 4, {0, 1});
    std::mt19937_64 rng(12);
    const Bag bag = random_bag(rng, 2, 4, 5);
    EXPECT_THROW(combined_loss(m, nullptr, bag), ContractError);
}

TEST(GradientOracle, AnalyticMatchesFiniteDifferences) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> dim(2, 8);
    std::uniform_int_distribution<std::size_t> bag_size(1, 4);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d_in = dim(rng);
        const bool with_distill = trial % 2 == 0;
        MilModel model = fixture_model(rng(), d_in, dim(rng), dim(rng), dim(rng),
                                       {0, 1});
        MilModel prev = model;
        expand_head(model, {2, 3}, rng());
        std::uniform_int_distribution<int> label(0, 3);
        const Bag bag = random_bag(rng, bag_size(rng), d_in, label(rng));

        const Gradients analytic =
            combined_loss_grad(model, with_distill ? &prev : nullptr, bag);
        MilModel probe = model;
        const Gradients numeric = finite_diff_grad(
            [&](const ModelParams& params) {
                probe.params = params;
                return combined_loss(probe, with_distill ? &prev : nullptr, bag).total;
            },
            model.params, 1e-5);
        const double rel = relative_error(analytic, numeric);
        worst = std::max(worst, rel);
        EXPECT_LT(rel, 1e-4) << "trial " << trial;
    }
    RecordProperty("worst_rel_err", std::to_string(worst));
}

TEST(TrainTask, ZeroLearningRateIsIdentity) {
    MilModel m = fixture_model(13, 4, 5, 3, 4, {0, 1});
    const MilModel before = m;
    std::mt19937_64 rng(14);
    const std::vector<Bag> bags{random_bag(rng, 3, 4, 0), random_bag(rng, 2, 4, 1)};
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 0.0;
    train_task(m, nullptr, bags, cfg);
    EXPECT_EQ(m, before);
}

TEST(TrainTask, OverfitsSingleBag) {
    MilModel m = fixture_model(15, 4, 5, 3, 4, {0, 1});
    std::mt19937_64 rng(16);
    const Bag bag = random_bag(rng, 3, 4, 1);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.lr = 0.1;
    train_task(m, nullptr, {bag}, cfg);
    const Vec64 logits = forward(m, bag).logits;
    EXPECT_LT(classification_loss(logits, m.class_index(bag.label)), 0.1);
}

TEST(TrainTask, DeterministicUnderSeed) {
    std::mt19937_64 rng(18);
    std::vector<Bag> bags;
    for (int i = 0; i < 6; ++i) bags.push_back(random_bag(rng, 3, 4, i % 2));
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.lr = 0.05;
    cfg.shuffle_seed = 21;

    MilModel a = fixture_model(19, 4, 5, 3, 4, {0, 1});
    MilModel b = a;
    train_task(a, nullptr, bags, cfg);
    train_task(b, nullptr, bags, cfg);
    EXPECT_EQ(a, b);
}

TEST(TrainTask, NonFiniteLossNamesEpochAndBag) {
    MilModel m = fixture_model(20, 4, 5, 3, 4, {0, 1});
    m.params.out_b[0] = std::numeric_limits<double>::quiet_NaN();
    std::mt19937_64 rng(21);
    const std::vector<Bag> bags{random_bag(rng, 2, 4, 0)};
    TrainConfig cfg;
    cfg.epochs = 1;
    try {
        train_task(m, nullptr, bags, cfg);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find(bags[0].bag_id), std::string::npos) << msg;
    }
}

// With distillation the old-class sigmoid outputs drift less during the next
// task; compared as means over five seeds.
TEST(TrainTask, DistillationReducesDrift) {
    double drift_with = 0.0, drift_without = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dataset ds = testutil::tiny_dataset(4, 6, 8, 8, seed);
        std::vector<Bag> task1, task2;
        for (std::size_t i = 0; i < ds.bags.size(); ++i) {
            if (ds.split_tags[i] != SplitTag::train) continue;
            if (ds.bags[i].label <= 1)
                task1.push_back(ds.bags[i]);
            else
                task2.push_back(ds.bags[i]);
        }
        MilModel base = make_model(ModelDims{8, 16, 8, 16}, seed);
        expand_head(base, {0, 1}, seed + 100);
        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.lr = 0.01;
        cfg.shuffle_seed = seed;
        train_task(base, nullptr, task1, cfg);
        const MilModel frozen = base;

        for (const bool distill : {true, false}) {
            MilModel next = frozen;
            expand_head(next, {2, 3}, seed + 200);
            TrainConfig cfg2 = cfg;
            cfg2.distill_enabled = distill;
            cfg2.shuffle_seed = seed + 1;
            train_task(next, &frozen, task2, cfg2);

            double drift = 0.0;
            std::size_t count = 0;
            for (const Bag& bag : task1) {
                const Vec64 now = forward(next, bag).logits;
                const Vec64 then = forward(frozen, bag).logits;
                for (std::size_t j = 0; j < frozen.num_classes(); ++j) {
                    drift += std::abs(sigmoid(now[j]) - sigmoid(then[j]));
                    ++count;
                }
            }
            drift /= static_cast<double>(count);
            (distill ? drift_with : drift_without) += drift;
        }
    }
    EXPECT_LT(drift_with, drift_without);
}
