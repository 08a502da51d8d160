#include "comil/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "comil/rng.hpp"
#include "comil/serialize.hpp"

namespace comil {

namespace {

void fill_gaussian(Vec64& t, std::mt19937_64& rng, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    for (double& x : t) x = dist(rng);
}

void check_instance_dim(const MilModel& model, const Bag& bag) {
    for (const Instance& inst : bag.instances) {
        if (inst.size() != model.dims.d_in)
            throw ShapeError("bag " + bag.bag_id + ": instance dim " +
                             std::to_string(inst.size()) + " vs model d_in " +
                             std::to_string(model.dims.d_in));
    }
}

} // namespace

std::size_t MilModel::class_index(int class_id) const {
    const auto it = std::find(class_ids.begin(), class_ids.end(), class_id);
    if (it == class_ids.end())
        throw ContractError("class id " + std::to_string(class_id) + " unknown to model");
    return static_cast<std::size_t>(it - class_ids.begin());
}

MilModel make_model(const ModelDims& dims, std::uint64_t seed) {
    if (dims.d_in == 0 || dims.feat == 0 || dims.att == 0 || dims.hidden == 0)
        throw ContractError("make_model: all dimensions must be positive");
    MilModel m;
    m.dims = dims;
    auto& p = m.params;
    p.feat1_w = Mat64(dims.feat, dims.d_in);
    p.feat1_b = Vec64(dims.feat, 0.0);
    p.feat2_w = Mat64(dims.feat, dims.feat);
    p.feat2_b = Vec64(dims.feat, 0.0);
    p.att_proj = Mat64(dims.att, dims.feat);
    p.att_score = Vec64(dims.att, 0.0);
    p.head_w = Mat64(dims.hidden, dims.feat);
    p.head_b = Vec64(dims.hidden, 0.0);
    p.out_w = Mat64(0, dims.hidden);
    p.out_b = Vec64{};

    auto rng = make_rng(seed, 0xC0317ull);
    constexpr double kInitSigma = 0.1;
    fill_gaussian(p.feat1_w.data, rng, kInitSigma);
    fill_gaussian(p.feat1_b, rng, kInitSigma);
    fill_gaussian(p.feat2_w.data, rng, kInitSigma);
    fill_gaussian(p.feat2_b, rng, kInitSigma);
    fill_gaussian(p.att_proj.data, rng, kInitSigma);
    fill_gaussian(p.att_score, rng, kInitSigma);
    fill_gaussian(p.head_w.data, rng, kInitSigma);
    fill_gaussian(p.head_b, rng, kInitSigma);
    return m;
}

Vec64 transform_instance(const MilModel& model, const Vec64& x) {
    const auto& p = model.params;
    const Vec64 a1 = tanh_vec(affine(x, p.feat1_w, p.feat1_b));
    return tanh_vec(affine(a1, p.feat2_w, p.feat2_b));
}

Vec64 attention_scores(const std::vector<Vec64>& features, const Mat64& att_proj,
                       const Vec64& att_score) {
    if (features.empty()) throw ContractError("attention_scores: empty bag");
    if (att_score.size() != att_proj.rows)
        throw ShapeError("attention_scores: score vector len " +
                         std::to_string(att_score.size()) + " vs projection rows " +
                         std::to_string(att_proj.rows));
    Vec64 scores(features.size());
    for (std::size_t i = 0; i < features.size(); ++i)
        scores[i] = dot(att_score, tanh_vec(mat_vec(att_proj, features[i])));
    return softmax(scores);
}

Vec64 pool(const std::vector<Vec64>& features, const Vec64& attentions) {
    if (features.size() != attentions.size())
        throw ContractError("pool: " + std::to_string(features.size()) + " features vs " +
                            std::to_string(attentions.size()) + " attentions");
    if (features.empty()) throw ContractError("pool: empty bag");
    Vec64 z(features[0].size(), 0.0);
    for (std::size_t i = 0; i < features.size(); ++i) {
        const Vec64& h = features[i];
        if (h.size() != z.size())
            throw ShapeError("pool: feature dim " + std::to_string(h.size()) + " vs " +
                             std::to_string(z.size()));
        for (std::size_t k = 0; k < z.size(); ++k) z[k] += attentions[i] * h[k];
    }
    return z;
}

ForwardTrace forward_trace(const MilModel& model, const Bag& bag) {
    if (bag.instances.empty()) throw ContractError("forward: bag " + bag.bag_id + " is empty");
    check_instance_dim(model, bag);
    const auto& p = model.params;
    const std::size_t n = bag.instances.size();

    ForwardTrace t;
    t.hidden1.resize(n);
    t.features.resize(n);
    t.att_proj.resize(n);
    t.scores.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.hidden1[i] = tanh_vec(affine(bag.instances[i], p.feat1_w, p.feat1_b));
        t.features[i] = tanh_vec(affine(t.hidden1[i], p.feat2_w, p.feat2_b));
        t.att_proj[i] = tanh_vec(mat_vec(p.att_proj, t.features[i]));
        t.scores[i] = dot(p.att_score, t.att_proj[i]);
    }
    t.attentions = softmax(t.scores);
    t.bag_feature = pool(t.features, t.attentions);
    t.head_hidden = tanh_vec(affine(t.bag_feature, p.head_w, p.head_b));
    t.logits = affine(t.head_hidden, p.out_w, p.out_b);
    return t;
}

BagOutput forward(const MilModel& model, const Bag& bag) {
    ForwardTrace t = forward_trace(model, bag);
    BagOutput out;
    out.logits = std::move(t.logits);
    out.attentions = std::move(t.attentions);
    out.bag_feature = std::move(t.bag_feature);
    out.instance_features = std::move(t.features);
    return out;
}

void expand_head(MilModel& model, const std::vector<int>& new_classes,
                 std::uint64_t seed) {
    for (std::size_t i = 0; i < new_classes.size(); ++i) {
        if (std::find(model.class_ids.begin(), model.class_ids.end(), new_classes[i]) !=
            model.class_ids.end())
            throw ContractError("expand_head: class " + std::to_string(new_classes[i]) +
                                " already present");
        for (std::size_t j = i + 1; j < new_classes.size(); ++j)
            if (new_classes[i] == new_classes[j])
                throw ContractError("expand_head: duplicate class " +
                                    std::to_string(new_classes[i]));
    }
    if (new_classes.empty()) return;

    auto& p = model.params;
    const std::size_t old_rows = p.out_w.rows;
    Mat64 grown(old_rows + new_classes.size(), model.dims.hidden);
    std::copy(p.out_w.data.begin(), p.out_w.data.end(), grown.data.begin());

    auto rng = make_rng(seed, 0xE84Aull);
    constexpr double kExpandSigma = 0.01;
    std::normal_distribution<double> dist(0.0, kExpandSigma);
    for (std::size_t r = old_rows; r < grown.rows; ++r)
        for (std::size_t c = 0; c < grown.cols; ++c) grown.at(r, c) = dist(rng);

    p.out_w = std::move(grown);
    p.out_b.resize(old_rows + new_classes.size(), 0.0);
    model.class_ids.insert(model.class_ids.end(), new_classes.begin(), new_classes.end());
}

std::vector<std::uint8_t> save_model(const MilModel& model) {
    ByteWriter w;
    w.magic("CML1");
    w.u32(static_cast<std::uint32_t>(model.dims.d_in));
    w.u32(static_cast<std::uint32_t>(model.dims.feat));
    w.u32(static_cast<std::uint32_t>(model.dims.att));
    w.u32(static_cast<std::uint32_t>(model.dims.hidden));
    w.u32(static_cast<std::uint32_t>(model.class_ids.size()));
    for (int c : model.class_ids) w.i32(c);
    model.params.for_each_tensor([&](const Vec64& t) {
        for (double x : t) w.f64(x);
    });
    return w.take();
}

MilModel load_model(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("CML1");
    ModelDims dims;
    dims.d_in = r.u32();
    dims.feat = r.u32();
    dims.att = r.u32();
    dims.hidden = r.u32();
    const std::uint32_t num_classes = r.u32();
    MilModel m = make_model(dims, 0);
    m.class_ids.resize(num_classes);
    for (auto& c : m.class_ids) c = r.i32();
    m.params.out_w = Mat64(num_classes, dims.hidden);
    m.params.out_b = Vec64(num_classes, 0.0);
    m.params.for_each_tensor([&](Vec64& t) {
        for (double& x : t) x = r.f64();
    });
    r.expect_end();
    return m;
}

void save_model_file(const MilModel& model, const std::filesystem::path& path) {
    const auto bytes = save_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + path.string());
}

MilModel load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_model(bytes);
}

} // namespace comil
