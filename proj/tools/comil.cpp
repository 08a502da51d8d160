// comil: generate synthetic bag datasets, run class-incremental scenarios,
// and compare run outputs.
//
// Exit codes: 0 success, 2 usage/config/format error, 3 numeric divergence.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "comil/data.hpp"
#include "comil/engine.hpp"

namespace fs = std::filesystem;
using namespace comil;

namespace {

constexpr const char* kSummarySchema =
    "summary.csv schema: header 'method,seed,avg_acc,avg_forget', one row per "
    "seed (avg_forget empty for single-task schedules), then a final row "
    "'method,aggregate,mean±std,mean±std' over seeds.";

constexpr const char* kComparisonSchema =
    "comparison.csv schema: header "
    "'method,avg_acc_mean,avg_acc_std,avg_forget_mean,avg_forget_std', one row "
    "per run directory.";

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

struct RunConfig {
    std::string dataset;
    std::string schedule;
    std::string method;
    std::size_t memory_k = 5000;
    std::size_t epochs = 20;
    double lr = 0.01;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string output;
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw ConfigError("config key '" + key + "': bad value '" + value + "'");
    return out;
}

RunConfig parse_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    RunConfig cfg;
    bool have_dataset = false, have_schedule = false, have_method = false,
         have_output = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key == "dataset") {
            cfg.dataset = value;
            have_dataset = true;
        } else if (key == "schedule") {
            cfg.schedule = value;
            have_schedule = true;
        } else if (key == "method") {
            cfg.method = value;
            have_method = true;
        } else if (key == "K") {
            cfg.memory_k = parse_number<std::size_t>(key, value);
        } else if (key == "epochs") {
            cfg.epochs = parse_number<std::size_t>(key, value);
            if (cfg.epochs == 0) throw ConfigError("config key 'epochs': must be >= 1");
        } else if (key == "lr") {
            char* end = nullptr;
            cfg.lr = std::strtod(value.c_str(), &end);
            if (end != value.c_str() + value.size() || !(cfg.lr > 0.0))
                throw ConfigError("config key 'lr': bad value '" + value + "'");
        } else if (key == "seeds") {
            cfg.seeds.clear();
            std::stringstream items(value);
            std::string item;
            while (std::getline(items, item, ','))
                cfg.seeds.push_back(parse_number<std::uint64_t>(key, trim(item)));
            if (cfg.seeds.empty()) throw ConfigError("config key 'seeds': empty list");
        } else if (key == "output") {
            cfg.output = value;
            have_output = true;
        } else {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": unknown key '" + key + "'");
        }
    }
    if (!have_dataset) throw ConfigError("config: missing key 'dataset'");
    if (!have_schedule) throw ConfigError("config: missing key 'schedule'");
    if (!have_method) throw ConfigError("config: missing key 'method'");
    if (!have_output) throw ConfigError("config: missing key 'output'");
    return cfg;
}

std::size_t worker_threads() {
    const char* env = std::getenv("COMIL_THREADS");
    if (env == nullptr || *env == '\0') return 0;
    return parse_number<std::size_t>("COMIL_THREADS", env);
}

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation, 0 for a single value
};

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    for (double v : values) a.mean += v;
    a.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return a;
}

int cmd_generate(const SyntheticSpec& spec, double train_fraction,
                 const std::string& output) {
    Dataset ds = generate(spec);
    split(ds, train_fraction, spec.seed);
    write_dataset(ds, output);
    std::size_t instances = 0;
    for (const Bag& b : ds.bags) instances += b.instances.size();
    std::cout << "generated classes=" << ds.num_classes() << " bags=" << ds.bags.size()
              << " instances=" << instances << "\n";
    return 0;
}

int cmd_run(const std::string& config_path) {
    const RunConfig cfg = parse_run_config(config_path);
    const Dataset dataset = read_dataset(cfg.dataset);
    const TaskSchedule schedule = TaskSchedule::from_text(cfg.schedule);
    const Method method = parse_method(cfg.method);

    TrainConfig train_cfg;
    train_cfg.epochs = cfg.epochs;
    train_cfg.lr = cfg.lr;

    fs::create_directories(cfg.output);

    std::vector<RunRecord> records(cfg.seeds.size());
    auto run_one = [&](std::size_t i) {
        try {
            records[i] = run_scenario(dataset, schedule, method, train_cfg,
                                      cfg.memory_k, cfg.seeds[i]);
        } catch (const DivergenceError& e) {
            throw DivergenceError("seed " + std::to_string(cfg.seeds[i]) + ": " +
                                  e.what());
        }
    };
    const std::size_t threads = std::min(worker_threads(), cfg.seeds.size());
    if (threads <= 1) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mu;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= cfg.seeds.size()) return;
                    try {
                        run_one(i);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(failure_mu);
                        if (!failure) failure = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::vector<double> accs, forgets;
    const bool has_forgetting = schedule.num_tasks() >= 2;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        const fs::path report_path =
            fs::path(cfg.output) / ("report_seed_" + std::to_string(cfg.seeds[i]) + ".txt");
        std::ofstream report(report_path, std::ios::binary | std::ios::trunc);
        if (!report) throw FormatError("cannot write " + report_path.string());
        write_report(records[i], report);
        accs.push_back(average_accuracy(records[i]));
        if (has_forgetting) forgets.push_back(average_forgetting(records[i]));
    }

    const fs::path summary_path = fs::path(cfg.output) / "summary.csv";
    std::ofstream summary(summary_path, std::ios::binary | std::ios::trunc);
    if (!summary) throw FormatError("cannot write " + summary_path.string());
    summary << "method,seed,avg_acc,avg_forget\n";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        summary << cfg.method << "," << cfg.seeds[i] << "," << fixed6(accs[i]) << ",";
        if (has_forgetting) summary << fixed6(forgets[i]);
        summary << "\n";
    }
    const Aggregate acc_agg = aggregate(accs);
    const Aggregate forget_agg = aggregate(forgets);
    summary << cfg.method << ",aggregate," << fixed6(acc_agg.mean) << "±"
            << fixed6(acc_agg.stddev) << ",";
    if (has_forgetting)
        summary << fixed6(forget_agg.mean) << "±" << fixed6(forget_agg.stddev);
    summary << "\n";
    summary.close();

    std::cout << "wrote " << summary_path.string() << "\n";
    std::cout << cfg.method << " avg_acc " << fixed6(acc_agg.mean) << " ± "
              << fixed6(acc_agg.stddev);
    if (has_forgetting)
        std::cout << ", avg_forget " << fixed6(forget_agg.mean) << " ± "
                  << fixed6(forget_agg.stddev);
    std::cout << "\n";
    return 0;
}

struct RunSummary {
    std::string method;
    std::vector<double> accs;
    std::vector<double> forgets;
};

RunSummary read_summary(const fs::path& dir) {
    const fs::path path = dir / "summary.csv";
    std::ifstream in(path);
    if (!in) throw FormatError("missing summary.csv in " + dir.string());
    RunSummary out;
    std::string line;
    if (!std::getline(in, line) || trim(line) != "method,seed,avg_acc,avg_forget")
        throw FormatError(path.string() + ": bad or missing header");
    while (std::getline(in, line)) {
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(stripped);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 3 || fields.size() > 4)
            throw FormatError(path.string() + ": bad row '" + stripped + "'");
        if (out.method.empty())
            out.method = fields[0];
        else if (out.method != fields[0])
            throw FormatError(path.string() + ": mixed methods in one summary");
        if (fields[1] == "aggregate") continue;
        try {
            out.accs.push_back(std::stod(fields[2]));
            if (fields.size() == 4 && !fields[3].empty())
                out.forgets.push_back(std::stod(fields[3]));
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": bad numeric field in '" + stripped + "'");
        }
    }
    if (out.accs.empty())
        throw FormatError(path.string() + ": no per-seed rows");
    return out;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& output_csv) {
    std::vector<RunSummary> summaries;
    for (const auto& dir : dirs) summaries.push_back(read_summary(dir));

    std::size_t name_width = std::string("method").size();
    for (const auto& s : summaries) name_width = std::max(name_width, s.method.size());
    const auto padded = [&](const std::string& s) {
        return s + std::string(name_width + 2 - s.size(), ' ');
    };

    std::ostringstream table;
    table << padded("method") << "avg_acc              avg_forget\n";
    std::ofstream csv(output_csv, std::ios::binary | std::ios::trunc);
    if (!csv) throw FormatError("cannot write " + output_csv);
    csv << "method,avg_acc_mean,avg_acc_std,avg_forget_mean,avg_forget_std\n";
    for (const auto& s : summaries) {
        const Aggregate acc = aggregate(s.accs);
        const Aggregate forget = aggregate(s.forgets);
        table << padded(s.method) << fixed6(acc.mean) << " ± " << fixed6(acc.stddev)
              << "  ";
        if (s.forgets.empty())
            table << "-\n";
        else
            table << fixed6(forget.mean) << " ± " << fixed6(forget.stddev) << "\n";
        csv << s.method << "," << fixed6(acc.mean) << "," << fixed6(acc.stddev) << ",";
        if (s.forgets.empty())
            csv << ",";
        else
            csv << fixed6(forget.mean) << "," << fixed6(forget.stddev);
        csv << "\n";
    }
    std::cout << table.str();
    std::cout << "wrote " << output_csv << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual multiple instance learning benchmark"};
    app.require_subcommand(1);

    // generate
    SyntheticSpec spec;
    double train_fraction = 0.75;
    std::string gen_output;
    auto* gen = app.add_subcommand("generate", "write a synthetic MILDS dataset");
    gen->add_option("--classes", spec.num_classes, "number of classes")
        ->capture_default_str();
    gen->add_option("--bags-per-class", spec.bags_per_class, "bags per class")
        ->capture_default_str();
    gen->add_option("--instances-per-bag", spec.instances_per_bag, "instances per bag")
        ->capture_default_str();
    gen->add_option("--dim", spec.d_in, "feature dimension")->capture_default_str();
    gen->add_option("--hallmark-fraction", spec.hallmark_fraction,
                    "fraction of class-informative instances per bag")
        ->capture_default_str();
    gen->add_option("--separation", spec.class_separation,
                    "norm and minimum pairwise distance of class centers")
        ->capture_default_str();
    gen->add_option("--noise-sigma", spec.noise_sigma, "instance noise sigma")
        ->capture_default_str();
    gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    gen->add_option("--train-fraction", train_fraction, "stratified train fraction")
        ->capture_default_str();
    gen->add_option("-o,--output", gen_output, "output dataset path")->required();

    // run
    std::string config_path;
    auto* run = app.add_subcommand(
        "run", std::string("run a scenario from a key=value config file "
                           "(keys: dataset, schedule, method, K, epochs, lr, seeds, "
                           "output). Writes one report per seed plus summary.csv. ") +
                   kSummarySchema + " COMIL_THREADS caps seed parallelism.");
    run->add_option("config", config_path, "config file path")->required();

    // report
    std::vector<std::string> report_dirs;
    std::string comparison_csv = "comparison.csv";
    auto* report = app.add_subcommand(
        "report", std::string("compare completed run directories. ") + kComparisonSchema);
    report->add_option("dirs", report_dirs, "run output directories")->required();
    report->add_option("-o,--output", comparison_csv, "comparison csv path")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(spec, train_fraction, gen_output);
        if (run->parsed()) return cmd_run(config_path);
        if (report->parsed()) return cmd_report(report_dirs, comparison_csv);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
