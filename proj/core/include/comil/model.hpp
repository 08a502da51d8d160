#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "comil/params.hpp"

namespace comil {

// One element of a bag: a fixed-dimension feature vector.
using Instance = Vec64;

// A labeled, ordered collection of instances (one patient sample).
struct Bag {
    std::string bag_id;
    int label = 0;
    std::vector<Instance> instances;

    bool operator==(const Bag&) const = default;
};

struct ModelDims {
    std::size_t d_in = 16;   // dataset feature dimension
    std::size_t feat = 16;   // per-instance transformed feature dimension
    std::size_t att = 8;     // attention space dimension
    std::size_t hidden = 16; // classifier hidden width

    bool operator==(const ModelDims&) const = default;
};

// Attention-pooled MIL classifier with an expandable per-class logit head.
struct MilModel {
    ModelDims dims;
    std::vector<int> class_ids; // ordered; out_w row i scores class_ids[i]
    ModelParams params;

    std::size_t num_classes() const { return class_ids.size(); }
    // Index of a class id in the head, or ContractError if unknown.
    std::size_t class_index(int class_id) const;

    bool operator==(const MilModel&) const = default;
};

struct BagOutput {
    Vec64 logits;                       // one per known class
    Vec64 attentions;                   // one per instance, sums to 1
    Vec64 bag_feature;                  // attention-pooled feature
    std::vector<Vec64> instance_features; // transformed per-instance features
};

// Every intermediate of one bag forward pass; consumed by the backward pass.
struct ForwardTrace {
    std::vector<Vec64> hidden1;  // tanh(feat1_w x + feat1_b) per instance
    std::vector<Vec64> features; // per-instance transformed features
    std::vector<Vec64> att_proj; // tanh(att_proj h) per instance
    Vec64 scores;                // raw attention scores
    Vec64 attentions;
    Vec64 bag_feature;
    Vec64 head_hidden;           // tanh(head_w z + head_b)
    Vec64 logits;
};

// Fresh model with an empty head; non-head tensors drawn from a seeded
// Gaussian (sigma 0.1).
MilModel make_model(const ModelDims& dims, std::uint64_t seed);

// Per-instance feature transform (two tanh dense layers).
Vec64 transform_instance(const MilModel& model, const Vec64& x);

// Softmax over w^T tanh(V h_i); output length equals the number of features.
Vec64 attention_scores(const std::vector<Vec64>& features, const Mat64& att_proj,
                       const Vec64& att_score);

// Attention-weighted sum of instance features.
Vec64 pool(const std::vector<Vec64>& features, const Vec64& attentions);

BagOutput forward(const MilModel& model, const Bag& bag);

ForwardTrace forward_trace(const MilModel& model, const Bag& bag);

// Adds one logit row per new class (seeded Gaussian, sigma 0.01, zero bias);
// every pre-existing parameter is left bit-identical.
void expand_head(MilModel& model, const std::vector<int>& new_classes,
                 std::uint64_t seed);

// Versioned binary checkpoint, magic "CML1", little-endian.
std::vector<std::uint8_t> save_model(const MilModel& model);
MilModel load_model(const std::vector<std::uint8_t>& bytes);

void save_model_file(const MilModel& model, const std::filesystem::path& path);
MilModel load_model_file(const std::filesystem::path& path);

} // namespace comil
