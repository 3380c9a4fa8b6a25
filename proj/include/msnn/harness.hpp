#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msnn/cohort.hpp"
#include "msnn/metrics.hpp"
#include "msnn/model.hpp"
#include "msnn/robustness.hpp"
#include "msnn/rng.hpp"
#include "msnn/volume.hpp"

namespace msnn {

// The four trainable configurations. multim is the multimodal network with the
// per-epoch missing-value mask switched on; it shares everything else with
// multi, including the architecture and the initialization stream.
enum class VariantKind { clin, multi, multim, mlp };

const char* variant_name(VariantKind v);
VariantKind variant_from_name(const std::string& name);
ModelKind model_kind_for(VariantKind v);
bool variant_uses_volumes(VariantKind v);

struct RunConfig {
    VariantKind variant = VariantKind::multi;
    std::size_t epochs = 75;
    std::size_t folds = 4;
    std::uint64_t seed = 7;
    double lr = 1e-3;
    std::size_t batch_size = 8;
    std::string preset = "tiny";  // tiny | paper
    ModelSpec model_spec = ModelSpec::tiny();
    NAPolicy train_policy;  // consulted only by multim
    double test_fraction = 57.0 / 377.0;
    std::uint32_t downscale_factor = 2;
    bool augment = true;
    AugmentSpec augment_spec;
    std::filesystem::path out;

    // Preset fills the model spec and volume geometry; flags may then override.
    static RunConfig for_preset(const std::string& preset);
    void validate() const;
};

std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);

struct GenConfig {
    std::size_t n_stable = 32;
    std::size_t n_decline = 32;
    double separation = 1.0;
    std::array<std::uint32_t, 3> acquisition_dims = {52, 54, 38};
    std::uint64_t seed = 7;
    std::filesystem::path out;

    static GenConfig for_preset(const std::string& preset);
};

std::string gen_config_to_json(const GenConfig& config);
GenConfig gen_config_from_json(const std::string& text);

struct CohortData {
    std::vector<Subject> subjects;
    std::filesystem::path volume_dir;
    std::uint64_t fingerprint = 0;  // of the cohort csv bytes
};

struct FoldOutcome {
    Model model;
    NormalizationStats stats;
    double val_auc = 0.0;
    std::size_t best_epoch = 0;
};

struct Evaluation {
    EvalReport report;
    // each fold model scored alone on the test set, for the rank comparisons
    std::vector<double> fold_aucs;
};

struct Experiment {
    RunConfig config;
    CohortSplit split;
    std::vector<FoldOutcome> folds;
    std::vector<double> na_levels;
    std::vector<Evaluation> evaluations;  // parallel to na_levels
    std::uint64_t cohort_fingerprint = 0;
};

// Pipeline stages. Every stage writes its artifacts under the out directory it
// is given and is deterministic in (seed, config, cohort bytes).
void run_gen(const GenConfig& config);
LabelingResult run_label(const std::filesystem::path& out_dir);
CohortData load_cohort(const std::filesystem::path& out_dir);

// Cross-validated training: per-fold normalization, per-epoch augmentation,
// best-validation-AUC model selection, mean-probability test ensemble.
// Emits split.json and one checkpoint per fold, plus the NA=0 evaluation.
Experiment run_train(const RunConfig& config, const CohortData& cohort);

// Re-evaluates the frozen fold models at each missing-data fraction,
// replacing the experiment's evaluation list.
void run_na_sweep(Experiment& experiment, const CohortData& cohort,
                  const std::vector<double>& fractions);

// Rebuilds a trained experiment from split.json + checkpoints for a later
// sweep invocation.
Experiment load_experiment(const std::filesystem::path& out_dir, const CohortData& cohort);

// metrics.csv, roc_<model>_<na>.csv and experiment.json under config.out.
void write_experiment_outputs(const Experiment& experiment);

// Combined metrics.csv, pairwise Kruskal-Wallis over per-fold AUCs (kw.csv,
// only with >= 2 experiments) and the roc.svg overlay.
void run_report(const std::vector<std::filesystem::path>& experiment_dirs,
                const std::filesystem::path& out_dir);

}  // namespace msnn
