#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "comil/model.hpp"

namespace comil {

// One knapsack item: an instance reference, its value score, and its memory
// cost (unit by default).
struct ValueItem {
    std::string bag_id;
    std::size_t instance_index = 0;
    double value = 0.0;
    std::size_t cost = 1;
};

// A stored partial bag with the value score of each kept instance.
struct ExemplarBag {
    Bag bag;
    Vec64 values; // parallel to bag.instances

    bool operator==(const ExemplarBag&) const = default;
};

// Budget-K store of value-scored instances reassembled into partial bags.
struct ExemplarMemory {
    std::size_t capacity_k = 0;
    std::vector<ExemplarBag> bags;

    std::size_t total_instances() const;
    std::map<int, std::size_t> per_class_instances() const;
    bool empty() const { return bags.empty(); }

    bool operator==(const ExemplarMemory&) const = default;
};

// Per-bag and per-class mean transformed features.
struct ClassStats {
    int class_id = 0;
    std::vector<Vec64> bag_means;
    Vec64 class_mean;
};

// floor(K / num_classes) instances per class.
std::size_t per_class_budget(std::size_t memory_k, std::size_t num_classes);

// Means over transformed instance features; all bags must share one label.
ClassStats compute_class_stats(const std::vector<const Bag*>& bags,
                               const MilModel& model);
ClassStats compute_class_stats(const std::vector<Bag>& bags, const MilModel& model);

// attention + distance to bag mean + distance to class mean.
double instance_value(const Vec64& feature, double attention, const Vec64& bag_mean,
                      const Vec64& class_mean);

// Exact 0/1 knapsack by dynamic programming: maximizes total value under the
// capacity, ties resolved toward lower item indices. Returns ascending indices
// into items.
std::vector<std::size_t> knapsack_select(const std::vector<ValueItem>& items,
                                         std::size_t capacity);

// Scores every instance of every bag per class, solves the per-class knapsack
// at budget per_class_budget(K, divisor), and reassembles the selection into
// partial bags. divisor defaults to the number of classes in the map; pass the
// total seen-class count when building a subset of classes.
ExemplarMemory build_exemplar_set(const std::map<int, std::vector<Bag>>& bags_per_class,
                                  const MilModel& model, std::size_t memory_k,
                                  std::size_t class_count_divisor = 0);

// Re-scores all stored instances with the current model, keeps the
// per_class_budget(K, new_num_classes) most valuable per class, and drops
// emptied bags. The result's instance set is a subset of the input's.
ExemplarMemory reduce_exemplar_set(const ExemplarMemory& memory, const MilModel& model,
                                   std::size_t new_num_classes);

// Binary container, magic "CMX1", little-endian; round-trips bit-exactly.
std::vector<std::uint8_t> save_memory(const ExemplarMemory& memory);
ExemplarMemory load_memory(const std::vector<std::uint8_t>& bytes);

void save_memory_file(const ExemplarMemory& memory, const std::filesystem::path& path);
ExemplarMemory load_memory_file(const std::filesystem::path& path);

} // namespace comil
