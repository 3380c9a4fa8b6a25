#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "msnn/cohort.hpp"
#include "msnn/graph.hpp"
#include "msnn/rng.hpp"

namespace msnn {

struct ConvLayer {
    enum class Kind { conv, pool };
    Kind kind = Kind::conv;
    std::size_t filters = 1;  // conv only
    std::size_t kernel = 3;   // conv only
    std::size_t stride = 1;   // conv only
    std::size_t window = 2;   // pool only
};

// Widths and wiring of every sub-network. The two siamese pairs (MRI, clinical)
// share one parameter set each when their entry is present in tied_groups.
struct ModelSpec {
    std::vector<ConvLayer> mri_branch;
    std::size_t mri_feature_width = 64;
    std::vector<std::size_t> clin_branch = {32, 32};
    std::vector<std::size_t> demo_net = {8};
    std::vector<std::size_t> clin_stack = {32};
    std::vector<std::size_t> joint_net = {64, 32};
    std::vector<std::size_t> mlp_widths = {32, 16};
    double dropout_rate = 0.5;
    // Expected volume shape (X, Y, Z) after downscaling; fixes the width of the
    // dense projection that follows the last conv stage.
    std::array<std::size_t, 3> volume_dims = {102, 108, 75};
    std::map<std::string, std::string> tied_groups = {{"mri", "mri_shared"},
                                                      {"clin", "clin_shared"}};

    static ModelSpec paper_default();
    static ModelSpec tiny();
    void validate() const;
};

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

enum class ModelKind { clin, multi, mlp };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

class Model {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    static Model build_multisiam(const ModelSpec& spec, Rng& rng);
    static Model build_clinsiam(const ModelSpec& spec, Rng& rng);
    static Model build_mlp_baseline(const ModelSpec& spec, Rng& rng);

    ModelKind kind() const { return kind_; }
    const ModelSpec& spec() const { return spec_; }
    ParamRegistry<float>& params() { return registry_; }
    const ParamRegistry<float>& params() const { return registry_; }
    std::size_t parameter_count() const { return registry_.parameter_count(); }

    // One taped evaluation. The merge taps expose the two subtract outputs for
    // tests; ids are npos where the variant has no such junction.
    struct Forward {
        Graphf graph;
        std::size_t output = npos;
        std::size_t loss = npos;
        std::size_t mri_merge = npos;
        std::size_t clin_merge = npos;
    };

    Forward forward(const SubjectPair& sample, Mode mode, Rng& rng) const;
    Forward forward_loss(const SubjectPair& sample, Mode mode, Rng& rng) const;
    // Deterministic eval-mode probability of class Decline.
    double predict(const SubjectPair& sample) const;

private:
    struct DenseParams {
        ParamPtr<float> w, b;
    };

    Model(ModelKind kind, ModelSpec spec);

    DenseParams create_params(const std::string& name, std::vector<std::size_t> w_shape,
                              std::vector<std::size_t> b_shape, Rng& rng, bool output_layer,
                              const std::string& group);
    DenseParams clone_params(const std::string& name, const DenseParams& src);
    std::vector<DenseParams> build_dense_chain(const std::string& prefix, std::size_t& width,
                                               const std::vector<std::size_t>& layers, Rng& rng,
                                               const std::string& group);
    std::size_t run_mri_branch(Graphf& g, std::size_t x,
                               const std::vector<DenseParams>& convs,
                               const DenseParams& proj) const;
    std::size_t run_dense_chain(Graphf& g, std::size_t x,
                                const std::vector<DenseParams>& layers) const;

    ModelKind kind_;
    ModelSpec spec_;
    ParamRegistry<float> registry_;

    std::vector<DenseParams> mri_a_, mri_b_;  // conv stacks (weights as rank-5)
    DenseParams mri_proj_a_, mri_proj_b_;
    std::vector<DenseParams> clin_a_, clin_b_;
    std::vector<DenseParams> demo_;
    std::vector<DenseParams> stack_;
    std::vector<DenseParams> joint_;
    std::vector<DenseParams> mlp_;
    DenseParams head_;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace msnn
