#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msnn/rng.hpp"
#include "msnn/tensor.hpp"

namespace msnn {

// The 8 time-varying clinical scores, in canonical storage order.
inline constexpr std::array<const char*, 8> kScoreNames = {
    "LDELTOTAL", "RAVLT_learning", "RAVLT_immediate", "CDRSB",
    "FAQ",       "TRABSCOR",       "RAVLT_forgetting", "DIGITSCOR"};

enum class Label { stable = 0, decline = 1 };

const char* label_name(Label label);

struct Visit {
    int months_from_baseline = 0;
    std::optional<int> mmse;
    std::array<std::optional<double>, 8> scores;
    std::string volume_ref;  // empty = no volume at this visit
};

struct Subject {
    std::string id;
    double age = 0.0;
    int gender = 0;  // binary code {0,1}
    int apoe4 = 0;   // allele count {0,1,2}
    std::vector<Visit> visits;
    std::optional<Label> label;
};

// Work order for the volume renderer: one synthetic scan per (subject, visit).
struct VolumePlan {
    std::string ref;
    double atrophy = 0.0;
    std::uint64_t seed = 0;
};

struct GeneratedCohort {
    std::vector<Subject> subjects;
    std::vector<VolumePlan> volumes;
    // class each subject was generated from (0 stable, 1 decline); the
    // pipeline never reads this, it exists to audit the labeling stage
    std::vector<int> generator_class;
};

GeneratedCohort generate_cohort(std::size_t n_stable, std::size_t n_decline,
                                double separation, Rng& rng);

const Visit* baseline_visit(const Subject& s);
// The visit whose volume pairs with baseline: m12 preferred, else m06.
const Visit* followup_visit(const Subject& s);

std::vector<Subject> eligibility_filter(const std::vector<Subject>& subjects);

// MMSE trajectory linearly resampled onto the common month grid {0,6,12,24}.
std::array<double, 4> resample_mmse_trajectory(const Subject& s);

struct LabelingResult {
    std::array<double, 4> stable_centroid{};
    std::array<double, 4> decline_centroid{};
    std::size_t n_stable = 0;
    std::size_t n_decline = 0;
};

// Clusters the subjects' resampled MMSE trajectories (Ward linkage, cut at 2),
// names the cluster with the lower mean end-minus-start change "decline", and
// writes labels in place.
LabelingResult label_subjects(std::vector<Subject>& subjects);

// Nearest-centroid label for a subject held out of the clustering.
Label assign_by_centroid(const Subject& s, const LabelingResult& labeling);

// Candidate-variable table for feature selection: one row per (subject, visit).
struct FeatureTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> rows;
};

// The table a real study would hand to variable screening: demographics, the
// 8 scores, and redundant/sparse companions that selection must reject.
FeatureTable build_candidate_table(const std::vector<Subject>& subjects, Rng& rng);

struct FeatureSelection {
    std::vector<std::string> selected;
    std::vector<std::string> dropped_correlated;
    std::vector<std::string> dropped_na;
    std::vector<std::string> zero_variance;
};

FeatureSelection select_features(const FeatureTable& table, double corr_threshold = 0.9,
                                 double na_threshold = 0.5);

// Pearson r over rows where both values are present; degenerate columns
// (fewer than 2 complete pairs, or zero variance) give 0.
double pearson(const std::vector<std::optional<double>>& a,
               const std::vector<std::optional<double>>& b);

struct NormalizationStats {
    std::array<double, 8> score_mean{};
    std::array<double, 8> score_std{};
    double age_mean = 0.0;
    double age_std = 1.0;
    std::vector<std::string> warnings;
};

// Means/stds over the baseline and follow-up visits of the given (training)
// subjects only; zero stds are replaced by 1 with a warning.
NormalizationStats compute_normalization(const std::vector<Subject>& train_subjects);

struct ClinicalVector {
    std::array<double, 8> scores{};     // z-scored; NA encoded as 0
    std::array<std::uint8_t, 8> na{};   // 1 where the score was missing
    std::array<double, 3> statics{};    // z-scored AGE, GENDER, APOE4 * 0.5
};

ClinicalVector encode_clinical(const Subject& s, const Visit& visit,
                               const NormalizationStats& stats);

// One model-ready sample: the two visits the network compares.
struct SubjectPair {
    std::string subject_id;
    int label = 0;
    Tensorf baseline_volume;
    Tensorf followup_volume;
    ClinicalVector baseline_clin;
    ClinicalVector followup_clin;
};

struct CohortSplit {
    std::vector<std::vector<std::string>> train_folds;
    std::vector<std::string> test;
};

CohortSplit stratified_split(const std::vector<Subject>& subjects, std::size_t n_test,
                             std::size_t n_folds, Rng& rng);

void write_cohort_csv(const std::vector<Subject>& subjects,
                      const std::filesystem::path& path);
std::vector<Subject> read_cohort_csv(const std::filesystem::path& path);

}  // namespace msnn
