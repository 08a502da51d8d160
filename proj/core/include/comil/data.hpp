#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "comil/model.hpp"

namespace comil {

// Shape of the synthetic bag dataset: each class has a hallmark center, each
// bag mixes a few hallmark draws into shared background noise.
struct SyntheticSpec {
    std::size_t num_classes = 8;
    std::size_t bags_per_class = 50;
    std::size_t instances_per_bag = 64;
    std::size_t d_in = 16;
    double hallmark_fraction = 0.1; // fraction of instances drawn near the class center
    double class_separation = 5.0;  // center norm and minimum pairwise center distance
    double noise_sigma = 1.0;
    std::uint64_t seed = 7;
    // optional per-class bag counts; empty means balanced bags_per_class
    std::vector<std::size_t> bags_per_class_override;
};

enum class SplitTag { train, test };

struct Dataset {
    std::size_t d_in = 0;
    std::vector<std::string> class_names; // label i is class_names[i]
    std::vector<Bag> bags;
    std::vector<SplitTag> split_tags; // parallel to bags

    std::size_t num_classes() const { return class_names.size(); }

    bool operator==(const Dataset&) const = default;
};

// Deterministic synthetic dataset; all bags tagged train until split() runs.
Dataset generate(const SyntheticSpec& spec);

// Stratified per-class bag split; train count is ceil(fraction * bags).
void split(Dataset& dataset, double train_fraction, std::uint64_t seed);

// MILDS text format: manifest line, class-name line, then per-bag records.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

std::string format_dataset(const Dataset& dataset);
Dataset parse_dataset(const std::string& text);

} // namespace comil
