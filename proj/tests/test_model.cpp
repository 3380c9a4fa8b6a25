#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "msnn/model.hpp"
#include "msnn/optimizer.hpp"

using namespace msnn;

namespace {

ClinicalVector clin_from(const std::array<double, 8>& scores,
                         const std::array<double, 3>& statics) {
    ClinicalVector c;
    c.scores = scores;
    c.statics = statics;
    return c;
}

Tensorf volume_for(const ModelSpec& spec, float base) {
    Tensorf t({1, spec.volume_dims[2], spec.volume_dims[1], spec.volume_dims[0]});
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.values[i] = base + 0.001f * static_cast<float>(i % 97);
    return t;
}

SubjectPair clinical_sample(int label) {
    SubjectPair s;
    s.subject_id = "S0001";
    s.label = label;
    s.baseline_clin = clin_from({0.2, -0.4, 1.0, 0.0, -1.2, 0.3, 0.8, -0.5},
                                {0.1, 1.0, 0.5});
    s.followup_clin = clin_from({-0.6, 0.1, 0.4, -0.9, 0.7, -0.2, 1.1, 0.0},
                                {0.1, 1.0, 0.5});
    return s;
}

SubjectPair multimodal_sample(const ModelSpec& spec, int label) {
    SubjectPair s = clinical_sample(label);
    s.baseline_volume = volume_for(spec, 0.2f);
    s.followup_volume = volume_for(spec, 0.35f);
    return s;
}

std::size_t count_by_prefixes(const Model& m, const std::vector<std::string>& prefixes) {
    std::size_t n = 0;
    for (const auto& store : m.params().stores())
        for (const auto& p : prefixes)
            if (store->name.rfind(p, 0) == 0) {
                n += store->value.numel();
                break;
            }
    return n;
}

}  // namespace

TEST_CASE("multimodal forward on zero inputs stays inside (0,1)") {
    ModelSpec spec = ModelSpec::tiny();
    Rng rng(11);
    Model m = Model::build_multisiam(spec, rng);
    SubjectPair s;
    s.subject_id = "Z";
    s.baseline_volume = Tensorf({1, spec.volume_dims[2], spec.volume_dims[1], spec.volume_dims[0]});
    s.followup_volume = s.baseline_volume;
    double p = m.predict(s);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
}

TEST_CASE("identical visits zero both merge taps") {
    ModelSpec spec = ModelSpec::tiny();
    Rng rng(12);
    Model m = Model::build_multisiam(spec, rng);
    SubjectPair s = multimodal_sample(spec, 1);
    s.followup_volume = s.baseline_volume;
    s.followup_clin = s.baseline_clin;
    Rng fwd(0);
    auto f = m.forward(s, Mode::eval, fwd);
    for (float v : f.graph.value(f.mri_merge).values) CHECK(v == 0.0f);
    for (float v : f.graph.value(f.clin_merge).values) CHECK(v == 0.0f);
}

TEST_CASE("swapping visit order negates both merge taps") {
    ModelSpec spec = ModelSpec::tiny();
    Rng rng(13);
    Model m = Model::build_multisiam(spec, rng);
    SubjectPair s = multimodal_sample(spec, 1);
    SubjectPair swapped = s;
    std::swap(swapped.baseline_volume, swapped.followup_volume);
    std::swap(swapped.baseline_clin, swapped.followup_clin);

    Rng fwd(0);
    auto fa = m.forward(s, Mode::eval, fwd);
    auto fb = m.forward(swapped, Mode::eval, fwd);
    const auto& ma = fa.graph.value(fa.mri_merge).values;
    const auto& mb = fb.graph.value(fb.mri_merge).values;
    REQUIRE(ma.size() == mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) CHECK(ma[i] == -mb[i]);
    const auto& ca = fa.graph.value(fa.clin_merge).values;
    const auto& cb = fb.graph.value(fb.clin_merge).values;
    for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca[i] == -cb[i]);
}

TEST_CASE("clinical variant matches the clinical sub-module of the multimodal build") {
    ModelSpec spec = ModelSpec::tiny();
    Rng r1(21), r2(21);
    Model multi = Model::build_multisiam(spec, r1);
    Model clin = Model::build_clinsiam(spec, r2);
    std::size_t sub = count_by_prefixes(multi, {"clin.", "demo.", "stack.", "head."});
    CHECK(clin.parameter_count() == sub);
    CHECK(multi.parameter_count() > sub);

    for (const auto& store : clin.params().stores()) {
        if (store->name.rfind("head.", 0) == 0) continue;
        auto twin = multi.params().find(store->name);
        REQUIRE(twin != nullptr);
        CHECK(twin->value.shape == store->value.shape);
    }
}

TEST_CASE("clinical variant predicts without volumes") {
    ModelSpec spec = ModelSpec::tiny();
    Rng rng(31);
    Model m = Model::build_clinsiam(spec, rng);
    SubjectPair s = clinical_sample(0);
    double p = m.predict(s);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
}

TEST_CASE("multimodal forward rejects missing or misshapen volumes") {
    ModelSpec spec = ModelSpec::tiny();
    Rng rng(32);
    Model m = Model::build_multisiam(spec, rng);
    SubjectPair s = clinical_sample(0);
    CHECK_THROWS_WITH_AS(m.predict(s), doctest::Contains("volume"), Error);

    s.baseline_volume = Tensorf({1, 5, 5, 5});
    s.followup_volume = Tensorf({1, 5, 5, 5});
    CHECK_THROWS_WITH_AS(m.predict(s), doctest::Contains("does not match spec"), Error);
}

TEST_CASE("eval forward is deterministic and rate-0 train matches it") {
    ModelSpec spec = ModelSpec::tiny();
    Rng rng(41);
    Model m = Model::build_clinsiam(spec, rng);
    SubjectPair s = clinical_sample(1);
    CHECK(m.predict(s) == m.predict(s));

    ModelSpec flat = ModelSpec::tiny();
    flat.dropout_rate = 0.0;
    Rng r2(41);
    Model m2 = Model::build_clinsiam(flat, r2);
    Rng train_rng(99);
    auto ft = m2.forward(s, Mode::train, train_rng);
    float train_out = ft.graph.value(ft.output).values[0];
    CHECK(static_cast<double>(train_out) == m2.predict(s));
}

TEST_CASE("tied pairs resolve to one store; untied twins start equal and diverge") {
    ModelSpec tied = ModelSpec::tiny();
    Rng r1(51);
    Model m1 = Model::build_clinsiam(tied, r1);
    CHECK(m1.params().find("clin.fc0.w") != nullptr);
    CHECK(m1.params().find("clin_b.fc0.w") == nullptr);
    CHECK(m1.params().find("clin.fc0.w")->shared_group == "clin_shared");

    ModelSpec untied = ModelSpec::tiny();
    untied.tied_groups.clear();
    Rng r2(51);
    Model m2 = Model::build_clinsiam(untied, r2);
    auto a = m2.params().find("clin.fc0.w");
    auto b = m2.params().find("clin_b.fc0.w");
    REQUIRE(a != nullptr);
    REQUIRE(b != nullptr);
    CHECK(a->value.values == b->value.values);
    CHECK(a->shared_group == "");

    SubjectPair s = clinical_sample(1);
    Optimizer<float> opt(Optimizer<float>::Kind::adam, 0.01f);
    for (int step = 0; step < 3; ++step) {
        Rng fwd(0);
        auto f = m2.forward_loss(s, Mode::eval, fwd);
        f.graph.backward(f.loss);
        opt.step(m2.params().stores());
    }
    CHECK(a->value.values != b->value.values);
}

TEST_CASE("tied gradient equals the sum over untied twin branches") {
    ModelSpec tied = ModelSpec::tiny();
    ModelSpec untied = ModelSpec::tiny();
    untied.tied_groups.clear();
    Rng r1(61), r2(61);
    Model mt = Model::build_clinsiam(tied, r1);
    Model mu = Model::build_clinsiam(untied, r2);

    SubjectPair s = clinical_sample(1);
    Rng f1(0), f2(0);
    auto ft = mt.forward_loss(s, Mode::eval, f1);
    ft.graph.backward(ft.loss);
    auto fu = mu.forward_loss(s, Mode::eval, f2);
    fu.graph.backward(fu.loss);

    for (std::size_t layer = 0; layer < tied.clin_branch.size(); ++layer) {
        for (const char* leaf : {".w", ".b"}) {
            std::string base = "clin.fc" + std::to_string(layer) + leaf;
            auto g_tied = mt.params().find(base);
            auto g_a = mu.params().find(base);
            auto g_b = mu.params().find("clin_b.fc" + std::to_string(layer) + leaf);
            REQUIRE(g_tied != nullptr);
            REQUIRE(g_a != nullptr);
            REQUIRE(g_b != nullptr);
            for (std::size_t i = 0; i < g_tied->grad.numel(); ++i) {
                double split = static_cast<double>(g_a->grad.values[i]) +
                               static_cast<double>(g_b->grad.values[i]);
                CHECK(std::abs(static_cast<double>(g_tied->grad.values[i]) - split) <= 1e-6);
            }
        }
    }
    // Branch-independent parameters see the exact same computation.
    for (const char* name : {"demo.fc0.w", "stack.fc0.w", "head.w", "head.b"}) {
        auto gt = mt.params().find(name);
        auto gu = mu.params().find(name);
        REQUIRE(gt != nullptr);
        REQUIRE(gu != nullptr);
        CHECK(gt->grad.values == gu->grad.values);
    }
}

TEST_CASE("mlp with no hidden layers is logistic regression") {
    ModelSpec spec = ModelSpec::tiny();
    spec.mlp_widths.clear();
    Rng rng(71);
    Model m = Model::build_mlp_baseline(spec, rng);
    CHECK(m.parameter_count() == 19 + 1);

    SubjectPair s = clinical_sample(0);
    auto w = m.params().find("head.w");
    auto b = m.params().find("head.b");
    REQUIRE(w != nullptr);
    REQUIRE(b != nullptr);
    std::vector<double> x;
    for (double v : s.baseline_clin.scores) x.push_back(v);
    for (double v : s.followup_clin.scores) x.push_back(v);
    for (double v : s.baseline_clin.statics) x.push_back(v);
    double z = static_cast<double>(b->value.values[0]);
    for (std::size_t i = 0; i < x.size(); ++i)
        z += static_cast<double>(w->value.values[i]) * x[i];
    double expected = 1.0 / (1.0 + std::exp(-z));
    CHECK(std::abs(m.predict(s) - expected) < 1e-6);
}

TEST_CASE("mlp reaches high accuracy on linearly separable toy data") {
    ModelSpec spec = ModelSpec::tiny();
    spec.mlp_widths = {8};
    Rng rng(81);
    Model m = Model::build_mlp_baseline(spec, rng);

    Rng data(82);
    std::vector<SubjectPair> train;
    for (int i = 0; i < 20; ++i) {
        int label = i % 2;
        SubjectPair s;
        s.subject_id = "T" + std::to_string(i);
        s.label = label;
        double shift = label ? 2.0 : -2.0;
        for (std::size_t k = 0; k < 8; ++k) {
            s.baseline_clin.scores[k] = data.normal(0.0, 0.3);
            s.followup_clin.scores[k] = data.normal(shift, 0.3);
        }
        s.baseline_clin.statics = {data.normal(0.0, 0.3), 0.0, 0.5};
        s.followup_clin.statics = s.baseline_clin.statics;
        train.push_back(s);
    }

    Optimizer<float> opt(Optimizer<float>::Kind::adam, 0.01f);
    Rng train_rng(83);
    for (int epoch = 0; epoch < 100; ++epoch) {
        for (const auto& s : train) {
            auto f = m.forward_loss(s, Mode::train, train_rng);
            f.graph.backward(f.loss);
            opt.step(m.params().stores());
        }
    }
    int correct = 0;
    for (const auto& s : train)
        correct += ((m.predict(s) >= 0.5) == (s.label == 1)) ? 1 : 0;
    CHECK(correct >= 20 * 0.99);
}

TEST_CASE("checkpoints round-trip spec, parameters and predictions") {
    ModelSpec spec = ModelSpec::tiny();
    Rng rng(91);
    Model m = Model::build_multisiam(spec, rng);

    SubjectPair s = multimodal_sample(spec, 1);
    Optimizer<float> opt(Optimizer<float>::Kind::adam, 0.005f);
    for (int step = 0; step < 2; ++step) {
        Rng fwd(0);
        auto f = m.forward_loss(s, Mode::eval, fwd);
        f.graph.backward(f.loss);
        opt.step(m.params().stores());
    }
    double before = m.predict(s);

    auto path = std::filesystem::temp_directory_path() / "msnn_ckpt_rt.msnn";
    save_checkpoint(m, path);
    Model loaded = load_checkpoint(path);
    CHECK(loaded.kind() == ModelKind::multi);
    CHECK(loaded.parameter_count() == m.parameter_count());
    REQUIRE(loaded.params().stores().size() == m.params().stores().size());
    for (std::size_t i = 0; i < m.params().stores().size(); ++i) {
        const auto& a = m.params().stores()[i];
        const auto& b = loaded.params().stores()[i];
        CHECK(a->name == b->name);
        CHECK(a->value.values == b->value.values);
    }
    CHECK(loaded.predict(s) == before);
    std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
    ModelSpec spec = ModelSpec::tiny();
    Rng rng(92);
    Model m = Model::build_clinsiam(spec, rng);
    auto path = std::filesystem::temp_directory_path() / "msnn_ckpt_bad.msnn";
    save_checkpoint(m, path);

    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }

    auto write_bytes = [&](const std::string& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    std::string flipped = bytes;
    flipped[flipped.size() - 20] = static_cast<char>(flipped[flipped.size() - 20] ^ 0x40);
    write_bytes(flipped);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), Error);

    write_bytes(bytes.substr(0, 6));
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), Error);

    std::string wrong_magic = bytes;
    wrong_magic[0] = 'X';
    write_bytes(wrong_magic);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), Error);

    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("model spec json round-trips") {
    ModelSpec spec = ModelSpec::tiny();
    spec.dropout_rate = 0.25;
    spec.tied_groups = {{"clin", "shared_c"}};
    ModelSpec back = model_spec_from_json(model_spec_to_json(spec));
    CHECK(back.mri_branch.size() == spec.mri_branch.size());
    for (std::size_t i = 0; i < spec.mri_branch.size(); ++i) {
        CHECK(back.mri_branch[i].kind == spec.mri_branch[i].kind);
        CHECK(back.mri_branch[i].filters == spec.mri_branch[i].filters);
        CHECK(back.mri_branch[i].window == spec.mri_branch[i].window);
    }
    CHECK(back.mri_feature_width == spec.mri_feature_width);
    CHECK(back.clin_branch == spec.clin_branch);
    CHECK(back.demo_net == spec.demo_net);
    CHECK(back.clin_stack == spec.clin_stack);
    CHECK(back.joint_net == spec.joint_net);
    CHECK(back.mlp_widths == spec.mlp_widths);
    CHECK(back.dropout_rate == spec.dropout_rate);
    CHECK(back.volume_dims == spec.volume_dims);
    CHECK(back.tied_groups == spec.tied_groups);

    CHECK_THROWS_AS(model_spec_from_json("not json"), Error);
    CHECK_THROWS_WITH_AS(model_spec_from_json(R"({"mri_branch":[{"type":"wat"}]})"),
                         doctest::Contains("unknown mri layer type"), Error);
}

TEST_CASE("spec validation rejects bad configurations") {
    ModelSpec spec = ModelSpec::tiny();
    spec.dropout_rate = 1.5;
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("outside [0, 1]"), Error);

    spec = ModelSpec::tiny();
    spec.clin_branch = {8, 0};
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("zero-width"), Error);

    spec = ModelSpec::tiny();
    spec.volume_dims = {4, 4, 4};
    Rng rng(1);
    CHECK_THROWS_WITH_AS(Model::build_multisiam(spec, rng), doctest::Contains("stage"), Error);
}

TEST_CASE("model kind names round-trip") {
    for (ModelKind k : {ModelKind::clin, ModelKind::multi, ModelKind::mlp})
        CHECK(model_kind_from_name(model_kind_name(k)) == k);
    CHECK_THROWS_AS(model_kind_from_name("resnet"), Error);
}
