#include "msnn/model.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msnn/error.hpp"

namespace msnn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr std::size_t kScoreWidth = 8;
constexpr std::size_t kStaticWidth = 3;

struct MriShape {
    std::size_t c, d, h, w;
};

// Walks the conv/pool chain over the configured volume dims and fails with
// the offending stage when a layer does not fit.
MriShape mri_output_shape(const ModelSpec& spec) {
    MriShape s{1, spec.volume_dims[2], spec.volume_dims[1], spec.volume_dims[0]};
    std::size_t stage = 0;
    for (const auto& layer : spec.mri_branch) {
        if (layer.kind == ConvLayer::Kind::conv) {
            if (layer.kernel > s.d || layer.kernel > s.h || layer.kernel > s.w)
                throw config_error("mri branch stage " + std::to_string(stage) + ": kernel " +
                                   std::to_string(layer.kernel) + " exceeds input extent " +
                                   std::to_string(s.d) + "x" + std::to_string(s.h) + "x" +
                                   std::to_string(s.w));
            s.c = layer.filters;
            s.d = (s.d - layer.kernel) / layer.stride + 1;
            s.h = (s.h - layer.kernel) / layer.stride + 1;
            s.w = (s.w - layer.kernel) / layer.stride + 1;
        } else {
            s.d /= layer.window;
            s.h /= layer.window;
            s.w /= layer.window;
            if (s.d == 0 || s.h == 0 || s.w == 0)
                throw config_error("mri branch stage " + std::to_string(stage) + ": window " +
                                   std::to_string(layer.window) + " leaves an empty output");
        }
        ++stage;
    }
    return s;
}

std::string tied_group(const ModelSpec& spec, const std::string& pair) {
    auto it = spec.tied_groups.find(pair);
    return it == spec.tied_groups.end() ? std::string() : it->second;
}

Tensorf scores_tensor(const ClinicalVector& c) {
    Tensorf t({kScoreWidth});
    for (std::size_t i = 0; i < kScoreWidth; ++i)
        t.values[i] = static_cast<float>(c.scores[i]);
    return t;
}

Tensorf statics_tensor(const ClinicalVector& c) {
    Tensorf t({kStaticWidth});
    for (std::size_t i = 0; i < kStaticWidth; ++i)
        t.values[i] = static_cast<float>(c.statics[i]);
    return t;
}

json conv_layer_to_json(const ConvLayer& l) {
    if (l.kind == ConvLayer::Kind::pool)
        return json{{"type", "pool"}, {"window", l.window}};
    return json{{"type", "conv"},
                {"filters", l.filters},
                {"kernel", l.kernel},
                {"stride", l.stride}};
}

ConvLayer conv_layer_from_json(const json& j) {
    ConvLayer l;
    std::string type = j.at("type").get<std::string>();
    if (type == "pool") {
        l.kind = ConvLayer::Kind::pool;
        l.window = j.at("window").get<std::size_t>();
    } else if (type == "conv") {
        l.kind = ConvLayer::Kind::conv;
        l.filters = j.at("filters").get<std::size_t>();
        l.kernel = j.at("kernel").get<std::size_t>();
        l.stride = j.at("stride").get<std::size_t>();
    } else {
        throw config_error("model spec: unknown mri layer type \"" + type + "\"");
    }
    return l;
}

json spec_to_json_obj(const ModelSpec& spec) {
    json branch = json::array();
    for (const auto& l : spec.mri_branch) branch.push_back(conv_layer_to_json(l));
    return json{{"mri_branch", branch},
                {"mri_feature_width", spec.mri_feature_width},
                {"clin_branch", spec.clin_branch},
                {"demo_net", spec.demo_net},
                {"clin_stack", spec.clin_stack},
                {"joint_net", spec.joint_net},
                {"mlp_widths", spec.mlp_widths},
                {"dropout_rate", spec.dropout_rate},
                {"volume_dims", spec.volume_dims},
                {"tied_groups", spec.tied_groups}};
}

ModelSpec spec_from_json_obj(const json& j) {
    ModelSpec s;
    s.mri_branch.clear();
    for (const auto& l : j.at("mri_branch")) s.mri_branch.push_back(conv_layer_from_json(l));
    s.mri_feature_width = j.at("mri_feature_width").get<std::size_t>();
    s.clin_branch = j.at("clin_branch").get<std::vector<std::size_t>>();
    s.demo_net = j.at("demo_net").get<std::vector<std::size_t>>();
    s.clin_stack = j.at("clin_stack").get<std::vector<std::size_t>>();
    s.joint_net = j.at("joint_net").get<std::vector<std::size_t>>();
    s.mlp_widths = j.at("mlp_widths").get<std::vector<std::size_t>>();
    s.dropout_rate = j.at("dropout_rate").get<double>();
    auto dims = j.at("volume_dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3)
        throw config_error("model spec: volume_dims must have 3 entries");
    std::copy(dims.begin(), dims.end(), s.volume_dims.begin());
    s.tied_groups = j.at("tied_groups").get<std::map<std::string, std::string>>();
    return s;
}

void append_u32(std::string& buf, std::uint32_t v) {
    char bytes[4];
    std::memcpy(bytes, &v, 4);
    buf.append(bytes, 4);
}

std::uint32_t read_u32(const std::string& buf, std::size_t offset) {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + offset, 4);
    return v;
}

std::uint32_t crc32_ieee(const std::string& buf, std::size_t n) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i)
        crc = table[(crc ^ static_cast<unsigned char>(buf[i])) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

}  // namespace

ModelSpec ModelSpec::paper_default() {
    auto conv = [](std::size_t filters) {
        ConvLayer l;
        l.kind = ConvLayer::Kind::conv;
        l.filters = filters;
        return l;
    };
    ConvLayer pool;
    pool.kind = ConvLayer::Kind::pool;
    ModelSpec s;
    s.mri_branch = {conv(8), pool, conv(16), pool, conv(32), pool};
    return s;
}

ModelSpec ModelSpec::tiny() {
    auto conv = [](std::size_t filters) {
        ConvLayer l;
        l.kind = ConvLayer::Kind::conv;
        l.filters = filters;
        return l;
    };
    ConvLayer pool;
    pool.kind = ConvLayer::Kind::pool;
    ModelSpec s;
    s.mri_branch = {conv(2), pool, conv(4), pool, conv(4)};
    s.mri_feature_width = 8;
    s.clin_branch = {8, 8};
    s.demo_net = {4};
    s.clin_stack = {8};
    s.joint_net = {8};
    s.mlp_widths = {16, 8};
    s.volume_dims = {26, 27, 19};
    return s;
}

void ModelSpec::validate() const {
    if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0))
        throw config_error("dropout rate " + std::to_string(dropout_rate) + " outside [0, 1]");
    if (mri_feature_width == 0)
        throw config_error("mri feature width must be positive");
    auto check_widths = [](const std::vector<std::size_t>& ws, const char* net) {
        for (std::size_t w : ws)
            if (w == 0) throw config_error(std::string(net) + ": zero-width layer");
    };
    check_widths(clin_branch, "clin branch");
    check_widths(demo_net, "demo net");
    check_widths(clin_stack, "clinical stack");
    check_widths(joint_net, "joint net");
    check_widths(mlp_widths, "mlp");
    for (std::size_t d : volume_dims)
        if (d == 0) throw config_error("volume dims must be positive");
    std::size_t stage = 0;
    for (const auto& l : mri_branch) {
        if (l.kind == ConvLayer::Kind::conv) {
            if (l.filters == 0 || l.kernel == 0 || l.stride == 0)
                throw config_error("mri branch stage " + std::to_string(stage) +
                                   ": filters, kernel and stride must be positive");
        } else if (l.window == 0) {
            throw config_error("mri branch stage " + std::to_string(stage) +
                               ": window must be positive");
        }
        ++stage;
    }
}

std::string model_spec_to_json(const ModelSpec& spec) {
    return spec_to_json_obj(spec).dump(2);
}

ModelSpec model_spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw config_error(std::string("model spec: ") + e.what());
    }
    try {
        ModelSpec s = spec_from_json_obj(j);
        s.validate();
        return s;
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw config_error(std::string("model spec: ") + e.what());
    }
}

const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::clin: return "clin";
        case ModelKind::multi: return "multi";
        case ModelKind::mlp: return "mlp";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "clin") return ModelKind::clin;
    if (name == "multi") return ModelKind::multi;
    if (name == "mlp") return ModelKind::mlp;
    throw config_error("unknown model kind: " + name);
}

Model::Model(ModelKind kind, ModelSpec spec) : kind_(kind), spec_(std::move(spec)) {}

Model::DenseParams Model::create_params(const std::string& name,
                                        std::vector<std::size_t> w_shape,
                                        std::vector<std::size_t> b_shape, Rng& rng,
                                        bool output_layer, const std::string& group) {
    Tensorf w(w_shape);
    std::size_t fan_in = w.numel() / w_shape[0];
    double sd = output_layer ? std::sqrt(2.0 / static_cast<double>(fan_in + w_shape[0]))
                             : std::sqrt(2.0 / static_cast<double>(fan_in));
    for (float& v : w.values) v = static_cast<float>(rng.normal(0.0, sd));
    DenseParams p;
    p.w = registry_.create(name + ".w", std::move(w), group);
    p.b = registry_.create(name + ".b", Tensorf(std::move(b_shape)), group);
    return p;
}

Model::DenseParams Model::clone_params(const std::string& name, const DenseParams& src) {
    DenseParams p;
    p.w = registry_.create(name + ".w", src.w->value);
    p.b = registry_.create(name + ".b", src.b->value);
    return p;
}

std::vector<Model::DenseParams> Model::build_dense_chain(const std::string& prefix,
                                                         std::size_t& width,
                                                         const std::vector<std::size_t>& layers,
                                                         Rng& rng, const std::string& group) {
    std::vector<DenseParams> chain;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        chain.push_back(create_params(prefix + ".fc" + std::to_string(i), {layers[i], width},
                                      {layers[i]}, rng, false, group));
        width = layers[i];
    }
    return chain;
}

Model Model::build_multisiam(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    MriShape out = mri_output_shape(spec);
    std::size_t flat = out.c * out.d * out.h * out.w;

    Model m(ModelKind::multi, spec);
    const std::string mri_group = tied_group(spec, "mri");
    std::size_t in_ch = 1, ci = 0;
    for (const auto& layer : spec.mri_branch) {
        if (layer.kind != ConvLayer::Kind::conv) continue;
        m.mri_a_.push_back(m.create_params(
            "mri.conv" + std::to_string(ci),
            {layer.filters, in_ch, layer.kernel, layer.kernel, layer.kernel}, {layer.filters},
            rng, false, mri_group));
        in_ch = layer.filters;
        ++ci;
    }
    m.mri_proj_a_ = m.create_params("mri.proj", {spec.mri_feature_width, flat},
                                    {spec.mri_feature_width}, rng, false, mri_group);
    if (mri_group.empty()) {
        for (std::size_t i = 0; i < m.mri_a_.size(); ++i)
            m.mri_b_.push_back(m.clone_params("mri_b.conv" + std::to_string(i), m.mri_a_[i]));
        m.mri_proj_b_ = m.clone_params("mri_b.proj", m.mri_proj_a_);
    } else {
        m.mri_b_ = m.mri_a_;
        m.mri_proj_b_ = m.mri_proj_a_;
    }

    const std::string clin_group = tied_group(spec, "clin");
    std::size_t clin_out = kScoreWidth;
    m.clin_a_ = m.build_dense_chain("clin", clin_out, spec.clin_branch, rng, clin_group);
    if (clin_group.empty()) {
        for (std::size_t i = 0; i < m.clin_a_.size(); ++i)
            m.clin_b_.push_back(m.clone_params("clin_b.fc" + std::to_string(i), m.clin_a_[i]));
    } else {
        m.clin_b_ = m.clin_a_;
    }

    std::size_t demo_out = kStaticWidth;
    m.demo_ = m.build_dense_chain("demo", demo_out, spec.demo_net, rng, "");

    std::size_t stack_out = clin_out + demo_out;
    m.stack_ = m.build_dense_chain("stack", stack_out, spec.clin_stack, rng, "");

    std::size_t joint_out = spec.mri_feature_width + stack_out;
    m.joint_ = m.build_dense_chain("joint", joint_out, spec.joint_net, rng, "");

    m.head_ = m.create_params("head", {1, joint_out}, {1}, rng, true, "");
    return m;
}

Model Model::build_clinsiam(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    Model m(ModelKind::clin, spec);

    const std::string clin_group = tied_group(spec, "clin");
    std::size_t clin_out = kScoreWidth;
    m.clin_a_ = m.build_dense_chain("clin", clin_out, spec.clin_branch, rng, clin_group);
    if (clin_group.empty()) {
        for (std::size_t i = 0; i < m.clin_a_.size(); ++i)
            m.clin_b_.push_back(m.clone_params("clin_b.fc" + std::to_string(i), m.clin_a_[i]));
    } else {
        m.clin_b_ = m.clin_a_;
    }

    std::size_t demo_out = kStaticWidth;
    m.demo_ = m.build_dense_chain("demo", demo_out, spec.demo_net, rng, "");

    std::size_t stack_out = clin_out + demo_out;
    m.stack_ = m.build_dense_chain("stack", stack_out, spec.clin_stack, rng, "");

    m.head_ = m.create_params("head", {1, stack_out}, {1}, rng, true, "");
    return m;
}

Model Model::build_mlp_baseline(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    Model m(ModelKind::mlp, spec);
    std::size_t width = 2 * kScoreWidth + kStaticWidth;
    m.mlp_ = m.build_dense_chain("mlp", width, spec.mlp_widths, rng, "");
    m.head_ = m.create_params("head", {1, width}, {1}, rng, true, "");
    return m;
}

std::size_t Model::run_mri_branch(Graphf& g, std::size_t x,
                                  const std::vector<DenseParams>& convs,
                                  const DenseParams& proj) const {
    std::size_t ci = 0;
    for (const auto& layer : spec_.mri_branch) {
        if (layer.kind == ConvLayer::Kind::conv) {
            x = g.relu(g.conv3d(x, g.param(convs[ci].w), g.param(convs[ci].b), layer.stride));
            ++ci;
        } else {
            x = g.avgpool3d(x, layer.window);
        }
    }
    x = g.flatten(x);
    return g.relu(g.dense(x, g.param(proj.w), g.param(proj.b)));
}

std::size_t Model::run_dense_chain(Graphf& g, std::size_t x,
                                   const std::vector<DenseParams>& layers) const {
    for (const auto& l : layers)
        x = g.relu(g.dense(x, g.param(l.w), g.param(l.b)));
    return x;
}

Model::Forward Model::forward(const SubjectPair& sample, Mode mode, Rng& rng) const {
    Forward f;
    Graphf& g = f.graph;

    if (kind_ == ModelKind::mlp) {
        std::size_t x = g.concat({g.input(scores_tensor(sample.baseline_clin)),
                                  g.input(scores_tensor(sample.followup_clin)),
                                  g.input(statics_tensor(sample.baseline_clin))});
        x = run_dense_chain(g, x, mlp_);
        f.output = g.sigmoid(g.dense(x, g.param(head_.w), g.param(head_.b)));
        return f;
    }

    std::size_t bl = run_dense_chain(g, g.input(scores_tensor(sample.baseline_clin)), clin_a_);
    std::size_t fu = run_dense_chain(g, g.input(scores_tensor(sample.followup_clin)), clin_b_);
    f.clin_merge = g.subtract(fu, bl);
    std::size_t demo = run_dense_chain(g, g.input(statics_tensor(sample.baseline_clin)), demo_);
    std::size_t features = run_dense_chain(g, g.concat({f.clin_merge, demo}), stack_);

    if (kind_ == ModelKind::multi) {
        const std::vector<std::size_t> expected = {1, spec_.volume_dims[2], spec_.volume_dims[1],
                                                   spec_.volume_dims[0]};
        if (sample.baseline_volume.numel() == 0 || sample.followup_volume.numel() == 0)
            throw data_error("model: subject " + sample.subject_id +
                             " lacks a volume required by the multimodal variant");
        if (sample.baseline_volume.shape != expected || sample.followup_volume.shape != expected)
            throw shape_error("model: subject " + sample.subject_id + " volume shape " +
                              sample.baseline_volume.shape_string() + " does not match spec [1," +
                              std::to_string(expected[1]) + "," + std::to_string(expected[2]) +
                              "," + std::to_string(expected[3]) + "]");
        std::size_t eb = g.input(sample.baseline_volume);
        std::size_t ef = g.input(sample.followup_volume);
        std::size_t fb = run_mri_branch(g, eb, mri_a_, mri_proj_a_);
        std::size_t ff = run_mri_branch(g, ef, mri_b_, mri_proj_b_);
        f.mri_merge = g.subtract(ff, fb);
        features = run_dense_chain(g, g.concat({f.mri_merge, features}), joint_);
    }

    std::size_t dropped = g.dropout(features, spec_.dropout_rate, mode, rng);
    f.output = g.sigmoid(g.dense(dropped, g.param(head_.w), g.param(head_.b)));
    return f;
}

Model::Forward Model::forward_loss(const SubjectPair& sample, Mode mode, Rng& rng) const {
    Forward f = forward(sample, mode, rng);
    f.loss = f.graph.bce_loss(f.output, sample.label);
    return f;
}

double Model::predict(const SubjectPair& sample) const {
    Rng rng(0);  // eval-mode dropout draws nothing
    Forward f = forward(sample, Mode::eval, rng);
    return static_cast<double>(f.graph.value(f.output).values[0]);
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    json header;
    header["kind"] = model_kind_name(model.kind());
    header["spec"] = spec_to_json_obj(model.spec());
    json params = json::array();
    for (const auto& store : model.params().stores())
        params.push_back(json{{"name", store->name}, {"shape", store->value.shape}});
    header["params"] = params;
    std::string htext = header.dump();

    std::string buf;
    buf += "MSNN1";
    append_u32(buf, static_cast<std::uint32_t>(htext.size()));
    buf += htext;
    for (const auto& store : model.params().stores()) {
        for (float v : store->value.values) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            append_u32(buf, bits);
        }
    }
    append_u32(buf, crc32_ieee(buf, buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open checkpoint for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw io_error("short write: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const std::size_t kMinSize = 5 + 4 + 4;
    if (buf.size() < kMinSize)
        throw data_error("checkpoint " + path.string() + ": truncated");
    if (buf.compare(0, 5, "MSNN1") != 0)
        throw data_error("checkpoint " + path.string() + ": bad magic");
    if (crc32_ieee(buf, buf.size() - 4) != read_u32(buf, buf.size() - 4))
        throw data_error("checkpoint " + path.string() + ": checksum mismatch");

    std::size_t hlen = read_u32(buf, 5);
    if (5 + 4 + hlen + 4 > buf.size())
        throw data_error("checkpoint " + path.string() + ": header length out of range");

    ModelKind kind;
    ModelSpec spec;
    std::vector<std::pair<std::string, std::vector<std::size_t>>> entries;
    try {
        json header = json::parse(buf.substr(9, hlen));
        kind = model_kind_from_name(header.at("kind").get<std::string>());
        spec = spec_from_json_obj(header.at("spec"));
        for (const auto& p : header.at("params"))
            entries.emplace_back(p.at("name").get<std::string>(),
                                 p.at("shape").get<std::vector<std::size_t>>());
    } catch (const std::exception& e) {
        throw data_error("checkpoint " + path.string() + ": bad header: " + e.what());
    }

    Rng rng(0);
    Model model = [&] {
        switch (kind) {
            case ModelKind::multi: return Model::build_multisiam(spec, rng);
            case ModelKind::clin: return Model::build_clinsiam(spec, rng);
            default: return Model::build_mlp_baseline(spec, rng);
        }
    }();

    const auto& stores = model.params().stores();
    if (entries.size() != stores.size())
        throw data_error("checkpoint " + path.string() + ": expected " +
                         std::to_string(stores.size()) + " parameters, found " +
                         std::to_string(entries.size()));
    std::size_t offset = 9 + hlen;
    for (std::size_t i = 0; i < stores.size(); ++i) {
        if (entries[i].first != stores[i]->name || entries[i].second != stores[i]->value.shape)
            throw data_error("checkpoint " + path.string() + ": parameter " + entries[i].first +
                             " does not match the rebuilt model");
        std::size_t bytes = 4 * stores[i]->value.numel();
        if (offset + bytes > buf.size() - 4)
            throw data_error("checkpoint " + path.string() + ": payload truncated");
        std::memcpy(stores[i]->value.values.data(), buf.data() + offset, bytes);
        stores[i]->value.validate_finite("checkpoint parameter " + stores[i]->name);
        offset += bytes;
    }
    if (offset != buf.size() - 4)
        throw data_error("checkpoint " + path.string() + ": payload size mismatch");
    return model;
}

}  // namespace msnn
