#include "comil/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "comil/rng.hpp"

namespace comil {

namespace {

Vec64 random_unit_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (;;) {
        Vec64 v(dim);
        double norm2 = 0.0;
        for (double& x : v) {
            x = gauss(rng);
            norm2 += x * x;
        }
        if (norm2 > 1e-12) {
            const double inv = 1.0 / std::sqrt(norm2);
            for (double& x : v) x *= inv;
            return v;
        }
    }
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view token, std::size_t line_no) {
    double v = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
        throw FormatError("line " + std::to_string(line_no) + ": bad float '" +
                          std::string(token) + "'");
    return v;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace

Dataset generate(const SyntheticSpec& spec) {
    if (spec.num_classes == 0 || spec.bags_per_class == 0 ||
        spec.instances_per_bag == 0 || spec.d_in == 0)
        throw ContractError("generate: all counts must be >= 1");
    if (!(spec.hallmark_fraction > 0.0 && spec.hallmark_fraction <= 1.0))
        throw ContractError("generate: hallmark_fraction must be in (0, 1]");
    if (spec.class_separation <= 0.0)
        throw ContractError("generate: class_separation must be positive");
    if (!spec.bags_per_class_override.empty() &&
        spec.bags_per_class_override.size() != spec.num_classes)
        throw ContractError("generate: bags_per_class_override size " +
                            std::to_string(spec.bags_per_class_override.size()) +
                            " vs num_classes " + std::to_string(spec.num_classes));

    auto rng = make_rng(spec.seed, 0xDA7Aull);

    // class hallmark centers: norm class_separation, pairwise at least as far apart
    std::vector<Vec64> centers;
    std::size_t tries = 0;
    while (centers.size() < spec.num_classes) {
        if (++tries > 10000)
            throw ContractError("generate: could not place " +
                                std::to_string(spec.num_classes) +
                                " centers at separation " +
                                std::to_string(spec.class_separation) + " in dim " +
                                std::to_string(spec.d_in));
        Vec64 candidate = random_unit_vector(rng, spec.d_in);
        for (double& x : candidate) x *= spec.class_separation;
        bool ok = true;
        for (const Vec64& c : centers)
            if (euclidean_distance(candidate, c) < spec.class_separation) {
                ok = false;
                break;
            }
        if (ok) centers.push_back(std::move(candidate));
    }

    const std::size_t hallmark_count = static_cast<std::size_t>(
        std::ceil(spec.hallmark_fraction * static_cast<double>(spec.instances_per_bag)));
    std::normal_distribution<double> gauss(0.0, 1.0);

    Dataset ds;
    ds.d_in = spec.d_in;
    for (std::size_t c = 0; c < spec.num_classes; ++c)
        ds.class_names.push_back("class_" + std::to_string(c));

    std::size_t bag_counter = 0;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const std::size_t bag_count = spec.bags_per_class_override.empty()
                                          ? spec.bags_per_class
                                          : spec.bags_per_class_override[c];
        for (std::size_t b = 0; b < bag_count; ++b) {
            Bag bag;
            bag.bag_id = "bag_" + std::to_string(bag_counter++);
            bag.label = static_cast<int>(c);
            bag.instances.reserve(spec.instances_per_bag);
            for (std::size_t i = 0; i < spec.instances_per_bag; ++i) {
                Instance inst(spec.d_in);
                const bool hallmark = i < hallmark_count;
                for (std::size_t k = 0; k < spec.d_in; ++k) {
                    const double center = hallmark ? centers[c][k] : 0.0;
                    inst[k] = center + spec.noise_sigma * gauss(rng);
                }
                bag.instances.push_back(std::move(inst));
            }
            ds.bags.push_back(std::move(bag));
        }
    }
    ds.split_tags.assign(ds.bags.size(), SplitTag::train);
    return ds;
}

void split(Dataset& dataset, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ContractError("split: train_fraction must be in (0, 1)");

    std::vector<std::vector<std::size_t>> per_class(dataset.num_classes());
    for (std::size_t i = 0; i < dataset.bags.size(); ++i) {
        const int label = dataset.bags[i].label;
        if (label < 0 || static_cast<std::size_t>(label) >= dataset.num_classes())
            throw ContractError("split: bag " + dataset.bags[i].bag_id +
                                " has label outside the class set");
        per_class[static_cast<std::size_t>(label)].push_back(i);
    }

    auto rng = make_rng(seed, 0x5711ull);
    dataset.split_tags.assign(dataset.bags.size(), SplitTag::train);
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        auto& indices = per_class[c];
        if (indices.size() < 2)
            throw ContractError("split: class " + std::to_string(c) + " has " +
                                std::to_string(indices.size()) +
                                " bags; need at least 2");
        std::shuffle(indices.begin(), indices.end(), rng);
        const auto train_count = static_cast<std::size_t>(
            std::ceil(train_fraction * static_cast<double>(indices.size())));
        // keep at least one test bag per class
        const std::size_t capped = std::min(train_count, indices.size() - 1);
        for (std::size_t k = 0; k < indices.size(); ++k)
            dataset.split_tags[indices[k]] =
                k < capped ? SplitTag::train : SplitTag::test;
    }
}

std::string format_dataset(const Dataset& dataset) {
    std::string out;
    out += "MILDS 1 " + std::to_string(dataset.d_in) + " " +
           std::to_string(dataset.num_classes()) + "\n";
    for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
        if (c > 0) out += '\t';
        out += dataset.class_names[c];
    }
    out += '\n';
    if (dataset.split_tags.size() != dataset.bags.size())
        throw ContractError("format_dataset: split tags missing");
    for (std::size_t i = 0; i < dataset.bags.size(); ++i) {
        const Bag& bag = dataset.bags[i];
        out += bag.bag_id + "\t" + std::to_string(bag.label) + "\t" +
               (dataset.split_tags[i] == SplitTag::train ? "train" : "test") + "\t" +
               std::to_string(bag.instances.size()) + "\n";
        for (const Instance& inst : bag.instances) {
            if (inst.size() != dataset.d_in)
                throw ContractError("format_dataset: bag " + bag.bag_id +
                                    " instance dim " + std::to_string(inst.size()) +
                                    " vs dataset d_in " + std::to_string(dataset.d_in));
            for (std::size_t k = 0; k < inst.size(); ++k) {
                if (k > 0) out += ' ';
                out += format_double(inst[k]);
            }
            out += '\n';
        }
    }
    return out;
}

Dataset parse_dataset(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    auto next_line = [&](const char* what) {
        if (!std::getline(in, line))
            throw FormatError("line " + std::to_string(line_no + 1) + ": missing " +
                              std::string(what));
        ++line_no;
    };

    if (!std::getline(in, line) || line.empty())
        throw FormatError("missing manifest");
    ++line_no;
    std::istringstream manifest(line);
    std::string magic;
    int version = 0;
    std::size_t d_in = 0, num_classes = 0;
    if (!(manifest >> magic >> version >> d_in >> num_classes) || magic != "MILDS")
        throw FormatError("line 1: bad manifest '" + line + "'");
    if (version != 1)
        throw FormatError("line 1: unsupported version " + std::to_string(version));
    if (d_in == 0 || num_classes == 0)
        throw FormatError("line 1: d_in and class count must be positive");

    Dataset ds;
    ds.d_in = d_in;
    next_line("class-name line");
    ds.class_names = split_on(line, '\t');
    if (ds.class_names.size() != num_classes)
        throw FormatError("line 2: " + std::to_string(ds.class_names.size()) +
                          " class names vs manifest count " +
                          std::to_string(num_classes));

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_on(line, '\t');
        if (fields.size() != 4)
            throw FormatError("line " + std::to_string(line_no) +
                              ": bag header needs 4 tab-separated fields");
        Bag bag;
        bag.bag_id = fields[0];
        try {
            bag.label = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw FormatError("line " + std::to_string(line_no) + ": bad label '" +
                              fields[1] + "'");
        }
        if (bag.label < 0 || static_cast<std::size_t>(bag.label) >= num_classes)
            throw FormatError("line " + std::to_string(line_no) + ": bag " + bag.bag_id +
                              " label out of range");
        SplitTag tag;
        if (fields[2] == "train")
            tag = SplitTag::train;
        else if (fields[2] == "test")
            tag = SplitTag::test;
        else
            throw FormatError("line " + std::to_string(line_no) + ": bad split tag '" +
                              fields[2] + "'");
        std::size_t count = 0;
        try {
            count = std::stoul(fields[3]);
        } catch (const std::exception&) {
            throw FormatError("line " + std::to_string(line_no) +
                              ": bad instance count '" + fields[3] + "'");
        }
        if (count == 0)
            throw FormatError("line " + std::to_string(line_no) + ": bag " + bag.bag_id +
                              " declares zero instances");
        bag.instances.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            next_line("instance line");
            const auto tokens = split_on(line, ' ');
            if (tokens.size() != d_in)
                throw FormatError("bag " + bag.bag_id + ": line " +
                                  std::to_string(line_no) + " has " +
                                  std::to_string(tokens.size()) + " values, expected " +
                                  std::to_string(d_in));
            Instance inst(d_in);
            for (std::size_t k = 0; k < d_in; ++k)
                inst[k] = parse_double(tokens[k], line_no);
            bag.instances.push_back(std::move(inst));
        }
        ds.bags.push_back(std::move(bag));
        ds.split_tags.push_back(tag);
    }
    return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    const std::string text = format_dataset(dataset);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw FormatError("short write to " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

} // namespace comil
