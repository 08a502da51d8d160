#include "comil/exemplar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "comil/serialize.hpp"

namespace comil {

std::size_t ExemplarMemory::total_instances() const {
    std::size_t n = 0;
    for (const auto& eb : bags) n += eb.bag.instances.size();
    return n;
}

std::map<int, std::size_t> ExemplarMemory::per_class_instances() const {
    std::map<int, std::size_t> counts;
    for (const auto& eb : bags) counts[eb.bag.label] += eb.bag.instances.size();
    return counts;
}

std::size_t per_class_budget(std::size_t memory_k, std::size_t num_classes) {
    if (num_classes == 0) throw ContractError("per_class_budget: num_classes must be >= 1");
    return memory_k / num_classes;
}

ClassStats compute_class_stats(const std::vector<const Bag*>& bags,
                               const MilModel& model) {
    if (bags.empty()) throw ContractError("compute_class_stats: empty bag list");
    const int label = bags.front()->label;
    ClassStats stats;
    stats.class_id = label;
    stats.bag_means.reserve(bags.size());
    for (const Bag* bag : bags) {
        if (bag->label != label)
            throw ContractError("compute_class_stats: mixed labels " +
                                std::to_string(label) + " and " +
                                std::to_string(bag->label));
        if (bag->instances.empty())
            throw ContractError("compute_class_stats: bag " + bag->bag_id + " is empty");
        Vec64 mean(model.dims.feat, 0.0);
        for (const Instance& inst : bag->instances) {
            const Vec64 h = transform_instance(model, inst);
            for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += h[k];
        }
        for (double& v : mean) v /= static_cast<double>(bag->instances.size());
        stats.bag_means.push_back(std::move(mean));
    }
    stats.class_mean.assign(model.dims.feat, 0.0);
    for (const Vec64& bm : stats.bag_means)
        for (std::size_t k = 0; k < bm.size(); ++k) stats.class_mean[k] += bm[k];
    for (double& v : stats.class_mean) v /= static_cast<double>(stats.bag_means.size());
    return stats;
}

ClassStats compute_class_stats(const std::vector<Bag>& bags, const MilModel& model) {
    std::vector<const Bag*> ptrs;
    ptrs.reserve(bags.size());
    for (const Bag& b : bags) ptrs.push_back(&b);
    return compute_class_stats(ptrs, model);
}

double instance_value(const Vec64& feature, double attention, const Vec64& bag_mean,
                      const Vec64& class_mean) {
    if (feature.size() != bag_mean.size() || feature.size() != class_mean.size())
        throw ShapeError("instance_value: dims " + std::to_string(feature.size()) + ", " +
                         std::to_string(bag_mean.size()) + ", " +
                         std::to_string(class_mean.size()) + " differ");
    if (!(attention >= 0.0 && attention <= 1.0))
        throw ContractError("instance_value: attention " + std::to_string(attention) +
                            " outside [0, 1]");
    return attention + euclidean_distance(feature, bag_mean) +
           euclidean_distance(feature, class_mean);
}

std::vector<std::size_t> knapsack_select(const std::vector<ValueItem>& items,
                                         std::size_t capacity) {
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].cost == 0)
            throw ContractError("knapsack_select: item " + std::to_string(i) +
                                " has zero cost");
        if (!(items[i].value >= 0.0) || !std::isfinite(items[i].value))
            throw ContractError("knapsack_select: item " + std::to_string(i) +
                                " has invalid value");
    }
    const std::size_t n = items.size();
    if (n == 0 || capacity == 0) return {};

    std::vector<double> best(capacity + 1, 0.0);
    // taken[i * (capacity+1) + c]: item i improves the optimum at capacity c
    std::vector<bool> taken(n * (capacity + 1), false);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cost = items[i].cost;
        if (cost > capacity) continue;
        const double value = items[i].value;
        for (std::size_t c = capacity; c >= cost; --c) {
            const double candidate = best[c - cost] + value;
            if (candidate > best[c]) {
                best[c] = candidate;
                taken[i * (capacity + 1) + c] = true;
            }
        }
    }

    std::vector<std::size_t> selected;
    std::size_t c = capacity;
    for (std::size_t i = n; i-- > 0;) {
        if (taken[i * (capacity + 1) + c]) {
            selected.push_back(i);
            c -= items[i].cost;
        }
    }
    std::reverse(selected.begin(), selected.end());
    return selected;
}

namespace {

// Shared by build and reduce: per-class knapsack over scored instances,
// reassembled into partial bags in original bag and instance order.
std::vector<ExemplarBag> select_class_instances(const std::vector<const Bag*>& bags,
                                                const MilModel& model,
                                                std::size_t budget) {
    // one forward per bag gives both features and attentions
    std::vector<BagOutput> outs;
    outs.reserve(bags.size());
    for (const Bag* bag : bags) outs.push_back(forward(model, *bag));

    std::vector<Vec64> bag_means;
    bag_means.reserve(bags.size());
    for (const BagOutput& out : outs) {
        Vec64 mean(model.dims.feat, 0.0);
        for (const Vec64& h : out.instance_features)
            for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += h[k];
        for (double& v : mean) v /= static_cast<double>(out.instance_features.size());
        bag_means.push_back(std::move(mean));
    }
    Vec64 class_mean(model.dims.feat, 0.0);
    for (const Vec64& bm : bag_means)
        for (std::size_t k = 0; k < bm.size(); ++k) class_mean[k] += bm[k];
    for (double& v : class_mean) v /= static_cast<double>(bag_means.size());

    std::vector<ValueItem> items;
    std::vector<std::pair<std::size_t, std::size_t>> origin; // (bag pos, instance idx)
    for (std::size_t b = 0; b < bags.size(); ++b) {
        for (std::size_t i = 0; i < bags[b]->instances.size(); ++i) {
            const double v = instance_value(outs[b].instance_features[i],
                                            outs[b].attentions[i], bag_means[b],
                                            class_mean);
            items.push_back(ValueItem{bags[b]->bag_id, i, v, 1});
            origin.emplace_back(b, i);
        }
    }

    const std::vector<std::size_t> chosen = knapsack_select(items, budget);

    std::vector<ExemplarBag> result(bags.size());
    for (std::size_t b = 0; b < bags.size(); ++b) {
        result[b].bag.bag_id = bags[b]->bag_id;
        result[b].bag.label = bags[b]->label;
    }
    for (std::size_t idx : chosen) {
        const auto [b, i] = origin[idx];
        result[b].bag.instances.push_back(bags[b]->instances[i]);
        result[b].values.push_back(items[idx].value);
    }
    std::erase_if(result, [](const ExemplarBag& eb) { return eb.bag.instances.empty(); });
    return result;
}

} // namespace

ExemplarMemory build_exemplar_set(const std::map<int, std::vector<Bag>>& bags_per_class,
                                  const MilModel& model, std::size_t memory_k,
                                  std::size_t class_count_divisor) {
    std::size_t divisor = class_count_divisor == 0 ? bags_per_class.size()
                                                   : class_count_divisor;
    if (divisor < bags_per_class.size())
        throw ContractError("build_exemplar_set: class divisor " +
                            std::to_string(divisor) + " below class count " +
                            std::to_string(bags_per_class.size()));
    ExemplarMemory memory;
    memory.capacity_k = memory_k;
    if (bags_per_class.empty()) return memory;

    const std::size_t budget = per_class_budget(memory_k, divisor);
    for (const auto& [label, bags] : bags_per_class) {
        if (bags.empty())
            throw ContractError("build_exemplar_set: class " + std::to_string(label) +
                                " has no bags");
        std::vector<const Bag*> ptrs;
        ptrs.reserve(bags.size());
        for (const Bag& b : bags) {
            if (b.label != label)
                throw ContractError("build_exemplar_set: bag " + b.bag_id +
                                    " labeled " + std::to_string(b.label) +
                                    " listed under class " + std::to_string(label));
            ptrs.push_back(&b);
        }
        auto selected = select_class_instances(ptrs, model, budget);
        for (auto& eb : selected) memory.bags.push_back(std::move(eb));
    }
    return memory;
}

ExemplarMemory reduce_exemplar_set(const ExemplarMemory& memory, const MilModel& model,
                                   std::size_t new_num_classes) {
    std::set<int> labels;
    for (const auto& eb : memory.bags) labels.insert(eb.bag.label);
    if (new_num_classes < labels.size())
        throw ContractError("reduce_exemplar_set: new class count " +
                            std::to_string(new_num_classes) + " below stored classes " +
                            std::to_string(labels.size()));

    const std::size_t budget = per_class_budget(memory.capacity_k, new_num_classes);

    // group stored bags per class, preserving order
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < memory.bags.size(); ++i)
        by_class[memory.bags[i].bag.label].push_back(i);

    std::vector<ExemplarBag> reduced(memory.bags.size());
    for (const auto& [label, indices] : by_class) {
        std::vector<const Bag*> ptrs;
        ptrs.reserve(indices.size());
        for (std::size_t i : indices) ptrs.push_back(&memory.bags[i].bag);
        auto selected = select_class_instances(ptrs, model, budget);
        // selected preserves bag order; map back onto original slots by bag_id
        std::size_t s = 0;
        for (std::size_t i : indices) {
            if (s < selected.size() && selected[s].bag.bag_id == memory.bags[i].bag.bag_id)
                reduced[i] = std::move(selected[s++]);
        }
    }

    ExemplarMemory out;
    out.capacity_k = memory.capacity_k;
    for (auto& eb : reduced)
        if (!eb.bag.instances.empty()) out.bags.push_back(std::move(eb));
    return out;
}

std::vector<std::uint8_t> save_memory(const ExemplarMemory& memory) {
    ByteWriter w;
    w.magic("CMX1");
    w.u64(memory.capacity_k);
    std::set<int> labels;
    for (const auto& eb : memory.bags) labels.insert(eb.bag.label);
    w.u32(static_cast<std::uint32_t>(labels.size()));
    for (int c : labels) w.i32(c);
    w.u32(static_cast<std::uint32_t>(memory.bags.size()));
    for (const auto& eb : memory.bags) {
        w.str(eb.bag.bag_id);
        w.i32(eb.bag.label);
        w.u32(static_cast<std::uint32_t>(eb.bag.instances.size()));
        const std::size_t d = eb.bag.instances.empty() ? 0 : eb.bag.instances[0].size();
        w.u32(static_cast<std::uint32_t>(d));
        for (const Instance& inst : eb.bag.instances) {
            if (inst.size() != d)
                throw ContractError("save_memory: ragged instance dims in bag " +
                                    eb.bag.bag_id);
            for (double x : inst) w.f64(x);
        }
        for (double v : eb.values) w.f64(v);
    }
    return w.take();
}

ExemplarMemory load_memory(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("CMX1");
    ExemplarMemory memory;
    memory.capacity_k = r.u64();
    const std::uint32_t num_labels = r.u32();
    for (std::uint32_t i = 0; i < num_labels; ++i) r.i32(); // label directory
    const std::uint32_t num_bags = r.u32();
    memory.bags.reserve(num_bags);
    for (std::uint32_t b = 0; b < num_bags; ++b) {
        ExemplarBag eb;
        eb.bag.bag_id = r.str();
        eb.bag.label = r.i32();
        const std::uint32_t n = r.u32();
        const std::uint32_t d = r.u32();
        if (n == 0)
            throw FormatError("empty bag " + eb.bag.bag_id + " at offset " +
                              std::to_string(r.offset()));
        eb.bag.instances.assign(n, Instance(d, 0.0));
        for (auto& inst : eb.bag.instances)
            for (double& x : inst) x = r.f64();
        eb.values.resize(n);
        for (double& v : eb.values) v = r.f64();
        memory.bags.push_back(std::move(eb));
    }
    r.expect_end();
    return memory;
}

void save_memory_file(const ExemplarMemory& memory, const std::filesystem::path& path) {
    const auto bytes = save_memory(memory);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + path.string());
}

ExemplarMemory load_memory_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_memory(bytes);
}

} // namespace comil
