#include "comil/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

using namespace comil;

namespace {

MilModel small_model(std::uint64_t seed = 0, std::size_t d_in = 4) {
    MilModel m = make_model(ModelDims{d_in, 5, 3, 4}, seed);
    expand_head(m, {0, 1}, seed + 1);
    return m;
}

Bag random_bag(std::uint64_t seed, std::size_t n, std::size_t d_in, int label = 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Bag bag;
    bag.bag_id = "bag_" + std::to_string(seed);
    bag.label = label;
    for (std::size_t i = 0; i < n; ++i) {
        Instance inst(d_in);
        for (double& x : inst) x = gauss(rng);
        bag.instances.push_back(std::move(inst));
    }
    return bag;
}

} // namespace

TEST(AttentionScores, SingletonIsOne) {
    Mat64 v(3, 4);
    const Vec64 w(3, 0.3);
    const Vec64 alpha = attention_scores({Vec64{1.0, 2.0, 3.0, 4.0}}, v, w);
    EXPECT_EQ(alpha, (Vec64{1.0}));
}

TEST(AttentionScores, IdenticalFeaturesShareWeight) {
    Mat64 v(3, 4);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    for (double& x : v.data) x = gauss(rng);
    Vec64 w(3);
    for (double& x : w) x = gauss(rng);
    const Vec64 h{0.5, -1.0, 2.0, 0.25};
    const Vec64 alpha = attention_scores({h, h}, v, w);
    EXPECT_EQ(alpha, (Vec64{0.5, 0.5}));
}

TEST(AttentionScores, ScalarDirectEvaluation) {
    Mat64 v(1, 1);
    v.at(0, 0) = 1.0;
    const Vec64 alpha = attention_scores({Vec64{0.0}, Vec64{10.0}}, v, Vec64{1.0});
    EXPECT_NEAR(alpha[0], 0.2689, 1e-3);
    EXPECT_NEAR(alpha[1], 0.7311, 1e-3);
}

TEST(AttentionScores, EmptyBagIsContractError) {
    EXPECT_THROW(attention_scores({}, Mat64(2, 2), Vec64(2, 0.0)), ContractError);
}

TEST(AttentionScores, DimensionMismatchIsShapeError) {
    EXPECT_THROW(attention_scores({Vec64{1.0, 2.0}}, Mat64(3, 2), Vec64(2, 0.0)),
                 ShapeError);
}

TEST(Pool, SingleAttentionIsIdentity) {
    EXPECT_EQ(pool({Vec64{3.0, 4.0}}, Vec64{1.0}), (Vec64{3.0, 4.0}));
}

TEST(Pool, SymmetricCancellation) {
    EXPECT_EQ(pool({Vec64{1.0, 0.0}, Vec64{-1.0, 0.0}}, Vec64{0.5, 0.5}),
              (Vec64{0.0, 0.0}));
}

TEST(Pool, WeightedDirectEvaluation) {
    EXPECT_EQ(pool({Vec64{4.0}, Vec64{0.0}}, Vec64{0.25, 0.75}), (Vec64{1.0}));
}

TEST(Pool, LengthMismatchIsContractError) {
    EXPECT_THROW(pool({Vec64{1.0}}, Vec64{0.5, 0.5}), ContractError);
}

TEST(Forward, PermutationInvariance) {
    const MilModel m = small_model(3);
    Bag bag = random_bag(17, 5, 4);
    const BagOutput base = forward(m, bag);

    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        Bag permuted = bag;
        std::vector<std::size_t> perm(bag.instances.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t i = 0; i < perm.size(); ++i)
            permuted.instances[i] = bag.instances[perm[i]];
        const BagOutput out = forward(m, permuted);
        for (std::size_t k = 0; k < base.logits.size(); ++k)
            EXPECT_NEAR(out.logits[k], base.logits[k], 1e-12);
        for (std::size_t i = 0; i < perm.size(); ++i)
            EXPECT_NEAR(out.attentions[i], base.attentions[perm[i]], 1e-12);
    }
}

TEST(Forward, RepeatedInstanceMatchesSingleton) {
    const MilModel m = small_model(4);
    Bag single = random_bag(23, 1, 4);
    Bag repeated = single;
    for (int i = 0; i < 5; ++i) repeated.instances.push_back(single.instances[0]);
    const BagOutput a = forward(m, single);
    const BagOutput b = forward(m, repeated);
    for (std::size_t k = 0; k < a.logits.size(); ++k)
        EXPECT_NEAR(a.logits[k], b.logits[k], 1e-9);
}

// Straight-line re-evaluation with raw loops, independent of the linalg
// kernels, on a fixed seed-0 model.
TEST(Forward, MatchesStraightLineOracle) {
    const MilModel m = small_model(0);
    const Bag bag = random_bag(42, 3, 4);
    const BagOutput out = forward(m, bag);

    const auto& p = m.params;
    const std::size_t n = bag.instances.size();
    std::vector<Vec64> h(n);
    Vec64 scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec64 a1(p.feat1_w.rows);
        for (std::size_t r = 0; r < p.feat1_w.rows; ++r) {
            double acc = p.feat1_b[r];
            for (std::size_t c = 0; c < p.feat1_w.cols; ++c)
                acc += p.feat1_w.at(r, c) * bag.instances[i][c];
            a1[r] = std::tanh(acc);
        }
        h[i].resize(p.feat2_w.rows);
        for (std::size_t r = 0; r < p.feat2_w.rows; ++r) {
            double acc = p.feat2_b[r];
            for (std::size_t c = 0; c < p.feat2_w.cols; ++c)
                acc += p.feat2_w.at(r, c) * a1[c];
            h[i][r] = std::tanh(acc);
        }
        double score = 0.0;
        for (std::size_t r = 0; r < p.att_proj.rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < p.att_proj.cols; ++c)
                acc += p.att_proj.at(r, c) * h[i][c];
            score += p.att_score[r] * std::tanh(acc);
        }
        scores[i] = score;
    }
    double max_score = scores[0];
    for (double s : scores) max_score = std::max(max_score, s);
    Vec64 alpha(n);
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        alpha[i] = std::exp(scores[i] - max_score);
        denom += alpha[i];
    }
    for (double& a : alpha) a /= denom;

    Vec64 z(m.dims.feat, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < z.size(); ++k) z[k] += alpha[i] * h[i][k];
    Vec64 u(p.head_w.rows);
    for (std::size_t r = 0; r < p.head_w.rows; ++r) {
        double acc = p.head_b[r];
        for (std::size_t c = 0; c < p.head_w.cols; ++c) acc += p.head_w.at(r, c) * z[c];
        u[r] = std::tanh(acc);
    }
    Vec64 logits(p.out_w.rows);
    for (std::size_t r = 0; r < p.out_w.rows; ++r) {
        double acc = p.out_b[r];
        for (std::size_t c = 0; c < p.out_w.cols; ++c) acc += p.out_w.at(r, c) * u[c];
        logits[r] = acc;
    }

    ASSERT_EQ(out.logits.size(), logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k)
        EXPECT_NEAR(out.logits[k], logits[k], 1e-12);
    for (std::size_t i = 0; i < n; ++i)
        EXPECT_NEAR(out.attentions[i], alpha[i], 1e-12);
}

TEST(Forward, ConvexHullAndNormalization) {
    std::mt19937_64 seeds(7);
    for (int trial = 0; trial < 20; ++trial) {
        const MilModel m = small_model(seeds());
        const Bag bag = random_bag(seeds(), 1 + trial % 6, 4);
        const BagOutput out = forward(m, bag);

        double sum = 0.0;
        for (double a : out.attentions) sum += a;
        EXPECT_NEAR(sum, 1.0, 1e-6);

        for (std::size_t k = 0; k < out.bag_feature.size(); ++k) {
            double lo = out.instance_features[0][k], hi = lo;
            for (const Vec64& h : out.instance_features) {
                lo = std::min(lo, h[k]);
                hi = std::max(hi, h[k]);
            }
            EXPECT_GE(out.bag_feature[k], lo - 1e-12);
            EXPECT_LE(out.bag_feature[k], hi + 1e-12);
        }
    }
}

TEST(Forward, WrongInstanceDimensionIsShapeError) {
    const MilModel m = small_model(1);
    Bag bag = random_bag(5, 2, 3);
    EXPECT_THROW(forward(m, bag), ShapeError);
}

TEST(ExpandHead, OldLogitsBitExact) {
    MilModel m = small_model(6);
    const Bag bag = random_bag(31, 4, 4);
    const BagOutput before = forward(m, bag);
    expand_head(m, {2, 3}, 77);
    const BagOutput after = forward(m, bag);
    ASSERT_EQ(after.logits.size(), 4u);
    EXPECT_EQ(before.logits[0], after.logits[0]);
    EXPECT_EQ(before.logits[1], after.logits[1]);
}

TEST(ExpandHead, EmptyExpansionIsNoOp) {
    MilModel m = small_model(8);
    const MilModel before = m;
    expand_head(m, {}, 123);
    EXPECT_EQ(m, before);
}

TEST(ExpandHead, SuccessiveExpansionsKeepOrder) {
    MilModel m = make_model(ModelDims{4, 5, 3, 4}, 2);
    expand_head(m, {10, 11}, 1);
    expand_head(m, {20, 21}, 2);
    EXPECT_EQ(m.class_ids, (std::vector<int>{10, 11, 20, 21}));
    EXPECT_EQ(m.params.out_w.rows, 4u);
    EXPECT_EQ(m.params.out_b.size(), 4u);
}

TEST(ExpandHead, DuplicateClassIsContractError) {
    MilModel m = small_model(9);
    EXPECT_THROW(expand_head(m, {1}, 3), ContractError);
    EXPECT_THROW(expand_head(m, {5, 5}, 3), ContractError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    MilModel m = small_model(12);
    expand_head(m, {7, 9}, 4);
    const auto bytes = save_model(m);
    const MilModel loaded = load_model(bytes);
    EXPECT_EQ(loaded, m);
}

TEST(Checkpoint, TruncatedBytesAreFormatError) {
    const MilModel m = small_model(13);
    auto bytes = save_model(m);
    bytes.resize(bytes.size() / 2);
    EXPECT_THROW(load_model(bytes), FormatError);
}

TEST(Checkpoint, BadMagicIsFormatError) {
    auto bytes = save_model(small_model(14));
    bytes[0] = 'X';
    EXPECT_THROW(load_model(bytes), FormatError);
}

TEST(Checkpoint, TrailingBytesAreFormatError) {
    auto bytes = save_model(small_model(15));
    bytes.push_back(0);
    EXPECT_THROW(load_model(bytes), FormatError);
}
