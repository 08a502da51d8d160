#include "comil/engine.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "comil/rng.hpp"

namespace comil {

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

std::string TaskSchedule::to_text() const {
    std::string out;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (t > 0) out += '|';
        for (std::size_t i = 0; i < tasks[t].size(); ++i) {
            if (i > 0) out += ',';
            out += std::to_string(tasks[t][i]);
        }
    }
    return out;
}

TaskSchedule TaskSchedule::from_text(const std::string& text) {
    TaskSchedule schedule;
    std::stringstream groups(text);
    std::string group;
    while (std::getline(groups, group, '|')) {
        std::vector<int> ids;
        std::stringstream items(group);
        std::string item;
        while (std::getline(items, item, ',')) {
            int v = 0;
            const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
            if (res.ec != std::errc{} || res.ptr != item.data() + item.size())
                throw ConfigError("schedule: bad class id '" + item + "'");
            ids.push_back(v);
        }
        if (ids.empty()) throw ConfigError("schedule: empty task group");
        schedule.tasks.push_back(std::move(ids));
    }
    if (schedule.tasks.empty()) throw ConfigError("schedule: no task groups");
    return schedule;
}

Method parse_method(const std::string& name) {
    if (name == "comil") return Method::comil;
    if (name == "finetune") return Method::finetune;
    if (name == "rehearse_full_bags") return Method::rehearse_full_bags;
    if (name == "attention_topk") return Method::attention_topk;
    if (name == "upper_bound") return Method::upper_bound;
    throw ConfigError("unknown method '" + name + "'");
}

std::string method_name(Method method) {
    switch (method) {
        case Method::comil: return "comil";
        case Method::finetune: return "finetune";
        case Method::rehearse_full_bags: return "rehearse_full_bags";
        case Method::attention_topk: return "attention_topk";
        case Method::upper_bound: return "upper_bound";
    }
    throw ContractError("method_name: invalid enum value");
}

namespace {

void validate_schedule(const Dataset& dataset, const TaskSchedule& schedule) {
    std::set<int> seen;
    for (const auto& group : schedule.tasks) {
        if (group.empty()) throw ContractError("schedule: empty task group");
        for (int c : group) {
            if (!seen.insert(c).second)
                throw ContractError("schedule: class " + std::to_string(c) +
                                    " appears twice");
            if (c < 0 || static_cast<std::size_t>(c) >= dataset.num_classes())
                throw ContractError("schedule: class " + std::to_string(c) +
                                    " not in dataset");
        }
    }
    if (seen.size() != dataset.num_classes())
        throw ContractError("schedule: covers " + std::to_string(seen.size()) +
                            " of " + std::to_string(dataset.num_classes()) +
                            " dataset classes");
}

void check_split_disjoint(const Dataset& dataset) {
    std::set<std::string> train_ids, test_ids;
    for (std::size_t i = 0; i < dataset.bags.size(); ++i) {
        if (dataset.split_tags[i] == SplitTag::train)
            train_ids.insert(dataset.bags[i].bag_id);
        else
            test_ids.insert(dataset.bags[i].bag_id);
    }
    for (const auto& id : test_ids)
        if (train_ids.count(id))
            throw ContractError("bag " + id + " appears in both train and test splits");
}

double evaluate(const MilModel& model, const std::vector<const Bag*>& bags) {
    if (bags.empty()) throw ContractError("evaluate: no test bags");
    std::size_t correct = 0;
    for (const Bag* bag : bags) {
        const BagOutput out = forward(model, *bag);
        const auto best =
            std::max_element(out.logits.begin(), out.logits.end()) - out.logits.begin();
        if (model.class_ids[static_cast<std::size_t>(best)] == bag->label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(bags.size());
}

void check_memory_invariants(const ExemplarMemory& memory, std::size_t memory_k,
                             std::size_t class_divisor) {
    if (memory.total_instances() > memory_k)
        throw ContractError("memory invariant: " +
                            std::to_string(memory.total_instances()) +
                            " instances exceed K=" + std::to_string(memory_k));
    const std::size_t budget = per_class_budget(memory_k, class_divisor);
    for (const auto& [label, count] : memory.per_class_instances())
        if (count > budget)
            throw ContractError("memory invariant: class " + std::to_string(label) +
                                " holds " + std::to_string(count) + " > budget " +
                                std::to_string(budget));
    for (const auto& eb : memory.bags)
        if (eb.bag.instances.empty())
            throw ContractError("memory invariant: empty bag " + eb.bag.bag_id);
}

// Highest-attention selection: per-bag quota ceil(budget / bags), bags visited
// in seeded random order until the class budget is filled.
std::vector<ExemplarBag> attention_topk_select(const std::vector<const Bag*>& bags,
                                               const MilModel& model,
                                               std::size_t budget,
                                               std::mt19937_64& rng) {
    if (bags.empty() || budget == 0) return {};
    const std::size_t quota =
        (budget + bags.size() - 1) / bags.size(); // ceil(budget / bags)
    std::vector<std::size_t> order(bags.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<ExemplarBag> out;
    std::size_t used = 0;
    for (std::size_t b : order) {
        if (used >= budget) break;
        const Bag& bag = *bags[b];
        const BagOutput fwd = forward(model, bag);
        const std::size_t take = std::min({quota, budget - used, bag.instances.size()});
        std::vector<std::size_t> idx(bag.instances.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) {
            return fwd.attentions[a] > fwd.attentions[c];
        });
        idx.resize(take);
        std::sort(idx.begin(), idx.end()); // original instance order
        ExemplarBag eb;
        eb.bag.bag_id = bag.bag_id;
        eb.bag.label = bag.label;
        for (std::size_t i : idx) {
            eb.bag.instances.push_back(bag.instances[i]);
            eb.values.push_back(fwd.attentions[i]);
        }
        if (!eb.bag.instances.empty()) out.push_back(std::move(eb));
        used += take;
    }
    return out;
}

// Whole-bag rehearsal: uniformly sampled bags per class until the next bag
// would overflow the budget.
std::vector<ExemplarBag> full_bag_select(const std::vector<const Bag*>& bags,
                                         std::size_t budget, std::mt19937_64& rng) {
    std::vector<std::size_t> order(bags.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<ExemplarBag> out;
    std::size_t used = 0;
    for (std::size_t b : order) {
        const Bag& bag = *bags[b];
        if (used + bag.instances.size() > budget) continue;
        ExemplarBag eb;
        eb.bag = bag;
        eb.values.assign(bag.instances.size(), 0.0);
        out.push_back(std::move(eb));
        used += bag.instances.size();
    }
    return out;
}

std::map<int, std::vector<const Bag*>> group_by_class(const std::vector<ExemplarBag>& bags) {
    std::map<int, std::vector<const Bag*>> by_class;
    for (const auto& eb : bags) by_class[eb.bag.label].push_back(&eb.bag);
    return by_class;
}

} // namespace

RunRecord run_scenario(const Dataset& dataset, const TaskSchedule& schedule,
                       Method method, const TrainConfig& cfg, std::size_t memory_k,
                       std::uint64_t seed) {
    validate_schedule(dataset, schedule);
    check_split_disjoint(dataset);
    if (dataset.split_tags.size() != dataset.bags.size())
        throw ContractError("run_scenario: dataset has no split tags");

    RunRecord record;
    record.method = method_name(method);
    record.schedule_text = schedule.to_text();
    record.memory_k = memory_k;
    record.seed = seed;
    record.epochs = cfg.epochs;
    record.lr = cfg.lr;

    ModelDims dims;
    dims.d_in = dataset.d_in;
    MilModel model = make_model(dims, mix_seed(seed, 1));
    std::unique_ptr<MilModel> prev;

    ExemplarMemory memory;
    memory.capacity_k = memory_k;
    std::size_t memory_divisor = 1;

    const bool uses_memory = method == Method::comil ||
                             method == Method::rehearse_full_bags ||
                             method == Method::attention_topk;
    const bool uses_distill = uses_memory;

    std::vector<Bag> cumulative_train;

    for (std::size_t t = 0; t < schedule.num_tasks(); ++t) {
        const auto step_start = std::chrono::steady_clock::now();
        const std::vector<int>& group = schedule.tasks[t];
        expand_head(model, group, mix_seed(seed, 100 + t));

        std::vector<Bag> new_train;
        for (std::size_t i = 0; i < dataset.bags.size(); ++i) {
            if (dataset.split_tags[i] != SplitTag::train) continue;
            if (std::find(group.begin(), group.end(), dataset.bags[i].label) !=
                group.end())
                new_train.push_back(dataset.bags[i]);
        }
        if (new_train.empty())
            throw ContractError("run_scenario: no training bags for task " +
                                std::to_string(t + 1));
        cumulative_train.insert(cumulative_train.end(), new_train.begin(),
                                new_train.end());

        std::vector<Bag> train_set;
        if (method == Method::upper_bound) {
            train_set = cumulative_train;
        } else {
            train_set = new_train;
            if (uses_memory)
                for (const auto& eb : memory.bags) train_set.push_back(eb.bag);
        }

        TrainConfig task_cfg = cfg;
        task_cfg.shuffle_seed = mix_seed(seed, 200 + t);
        task_cfg.distill_enabled = uses_distill && cfg.distill_enabled;
        train_task(model, prev.get(), train_set, task_cfg);

        std::vector<double> row;
        for (std::size_t j = 0; j <= t; ++j) {
            std::vector<const Bag*> test_bags;
            for (std::size_t i = 0; i < dataset.bags.size(); ++i) {
                if (dataset.split_tags[i] != SplitTag::test) continue;
                const auto& jg = schedule.tasks[j];
                if (std::find(jg.begin(), jg.end(), dataset.bags[i].label) != jg.end())
                    test_bags.push_back(&dataset.bags[i]);
            }
            row.push_back(evaluate(model, test_bags));
        }
        record.accuracy.push_back(std::move(row));

        if (uses_memory) {
            std::size_t seen_classes = 0;
            for (std::size_t j = 0; j <= t; ++j) seen_classes += schedule.tasks[j].size();
            const std::size_t budget = per_class_budget(memory_k, seen_classes);
            auto rng = make_rng(seed, 300 + t);

            ExemplarMemory next;
            next.capacity_k = memory_k;
            if (method == Method::comil) {
                next = reduce_exemplar_set(memory, model, seen_classes);
            } else if (method == Method::attention_topk) {
                for (const auto& [label, bag_ptrs] : group_by_class(memory.bags)) {
                    auto kept = attention_topk_select(bag_ptrs, model, budget, rng);
                    for (auto& eb : kept) next.bags.push_back(std::move(eb));
                }
            } else { // rehearse_full_bags: keep leading whole bags within budget
                std::map<int, std::size_t> used;
                for (const auto& eb : memory.bags) {
                    auto& u = used[eb.bag.label];
                    if (u + eb.bag.instances.size() > budget) continue;
                    u += eb.bag.instances.size();
                    next.bags.push_back(eb);
                }
            }

            std::map<int, std::vector<const Bag*>> new_by_class;
            for (const Bag& bag : new_train) new_by_class[bag.label].push_back(&bag);
            if (method == Method::comil) {
                std::map<int, std::vector<Bag>> owned;
                for (const auto& [label, ptrs] : new_by_class) {
                    auto& v = owned[label];
                    for (const Bag* b : ptrs) v.push_back(*b);
                }
                ExemplarMemory built =
                    build_exemplar_set(owned, model, memory_k, seen_classes);
                for (auto& eb : built.bags) next.bags.push_back(std::move(eb));
            } else if (method == Method::attention_topk) {
                for (const auto& [label, ptrs] : new_by_class) {
                    auto added = attention_topk_select(ptrs, model, budget, rng);
                    for (auto& eb : added) next.bags.push_back(std::move(eb));
                }
            } else {
                for (const auto& [label, ptrs] : new_by_class) {
                    auto added = full_bag_select(ptrs, budget, rng);
                    for (auto& eb : added) next.bags.push_back(std::move(eb));
                }
            }

            memory = std::move(next);
            memory_divisor = seen_classes;
            check_memory_invariants(memory, memory_k, memory_divisor);
        }

        if (uses_distill) prev = std::make_unique<MilModel>(model);

        const auto step_end = std::chrono::steady_clock::now();
        record.step_seconds.push_back(
            std::chrono::duration<double>(step_end - step_start).count());
    }
    return record;
}

double average_accuracy(const RunRecord& record) {
    const std::size_t T = record.accuracy.size();
    if (T == 0) throw ContractError("average_accuracy: empty record");
    for (std::size_t t = 0; t < T; ++t)
        if (record.accuracy[t].size() != t + 1)
            throw ContractError("average_accuracy: incomplete accuracy matrix at step " +
                                std::to_string(t + 1));
    const auto& last = record.accuracy.back();
    return std::accumulate(last.begin(), last.end(), 0.0) /
           static_cast<double>(last.size());
}

double average_forgetting(const RunRecord& record) {
    const std::size_t T = record.accuracy.size();
    if (T < 2) throw ContractError("average_forgetting: needs at least 2 tasks");
    for (std::size_t t = 0; t < T; ++t)
        if (record.accuracy[t].size() != t + 1)
            throw ContractError("average_forgetting: incomplete accuracy matrix at step " +
                                std::to_string(t + 1));
    double sum = 0.0;
    for (std::size_t j = 0; j + 1 < T; ++j) {
        double peak = record.accuracy[j][j];
        for (std::size_t t = j; t + 1 < T; ++t)
            peak = std::max(peak, record.accuracy[t][j]);
        sum += peak - record.accuracy[T - 1][j];
    }
    return sum / static_cast<double>(T - 1);
}

std::string format_report(const RunRecord& record) {
    std::string out;
    out += "method=" + record.method + "\n";
    out += "seed=" + std::to_string(record.seed) + "\n";
    out += "K=" + std::to_string(record.memory_k) + "\n";
    out += "schedule=" + record.schedule_text + "\n";
    for (std::size_t t = 0; t < record.accuracy.size(); ++t)
        for (std::size_t j = 0; j < record.accuracy[t].size(); ++j)
            out += "acc," + std::to_string(t + 1) + "," + std::to_string(j + 1) + "," +
                   format_double(record.accuracy[t][j]) + "\n";
    const double acc = average_accuracy(record);
    const std::string forget = record.accuracy.size() >= 2
                                   ? format_double(average_forgetting(record))
                                   : std::string{};
    out += "summary," + format_double(acc) + "," + forget + "\n";
    return out;
}

void write_report(const RunRecord& record, std::ostream& out) {
    out << format_report(record);
}

} // namespace comil
