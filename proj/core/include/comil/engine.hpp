#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "comil/data.hpp"
#include "comil/exemplar.hpp"
#include "comil/train.hpp"

namespace comil {

// Ordered disjoint class groups; one group is introduced per step.
struct TaskSchedule {
    std::vector<std::vector<int>> tasks;

    std::size_t num_tasks() const { return tasks.size(); }
    std::string to_text() const;               // "0,1|2,3|4,5|6,7"
    static TaskSchedule from_text(const std::string& text);
};

enum class Method {
    comil,              // value-scored instance rehearsal + distillation
    finetune,           // new data only, no memory, no distillation
    rehearse_full_bags, // whole-bag rehearsal + distillation
    attention_topk,     // highest-attention instance rehearsal + distillation
    upper_bound,        // trains on all data seen so far
};

Method parse_method(const std::string& name);
std::string method_name(Method method);

struct RunRecord {
    // accuracy[t][j]: accuracy on task j's test classes after training step t,
    // 0-based, row t holds t+1 entries
    std::vector<std::vector<double>> accuracy;
    std::vector<double> step_seconds;
    std::string method;
    std::string schedule_text;
    std::size_t memory_k = 0;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double lr = 0.0;
};

// Runs the class-incremental scenario: per task, expand the head, assemble the
// training set per method, train, evaluate on every task seen, update memory.
// Memory invariants are asserted after every step.
RunRecord run_scenario(const Dataset& dataset, const TaskSchedule& schedule,
                       Method method, const TrainConfig& cfg, std::size_t memory_k,
                       std::uint64_t seed);

// Mean accuracy over all tasks at the final step.
double average_accuracy(const RunRecord& record);

// Mean over tasks j < T of (peak accuracy on j before the final step) minus
// (final accuracy on j).
double average_forgetting(const RunRecord& record);

// Plain-text report: key=value header, acc rows, summary row.
std::string format_report(const RunRecord& record);
void write_report(const RunRecord& record, std::ostream& out);

} // namespace comil
