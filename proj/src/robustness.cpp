#include "msnn/robustness.hpp"

#include <cmath>

#include "msnn/error.hpp"

namespace msnn {

namespace {

void erase_scores(ClinicalVector& v, std::size_t count, Rng& rng) {
    if (count == 0) return;
    const auto picks = rng.sample_without_replacement(8, count);
    for (std::size_t k : picks) {
        v.scores[k] = 0.0;
        v.na[k] = 1;
    }
}

}  // namespace

void validate(const NAPolicy& policy) {
    if (policy.test_fraction < 0.0 || policy.test_fraction >= 1.0)
        throw config_error("NA test fraction must be in [0,1)");
    if (policy.train_subject_prob < 0.0 || policy.train_subject_prob > 1.0)
        throw config_error("NA train subject probability must be in [0,1]");
    if (policy.train_erase_per_visit > 8)
        throw config_error("NA erase count cannot exceed the 8 scores");
}

std::pair<ClinicalVector, ClinicalVector> inject_test_na(
    const ClinicalVector& baseline, const ClinicalVector& followup, double fraction,
    Rng& rng) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw config_error("NA test fraction must be in [0,1)");
    const auto count = static_cast<std::size_t>(std::llround(fraction * 8.0));
    auto out = std::make_pair(baseline, followup);
    Rng bl_rng = rng.child("bl");
    Rng fu_rng = rng.child("fu");
    erase_scores(out.first, count, bl_rng);
    erase_scores(out.second, count, fu_rng);
    return out;
}

std::vector<SubjectPair> train_na_mask(const std::vector<SubjectPair>& batch,
                                       const NAPolicy& policy, Rng& rng) {
    if (policy.mode != NAPolicy::Mode::train_random)
        throw config_error("train_na_mask requires a train_random policy");
    validate(policy);
    std::vector<SubjectPair> out = batch;
    for (auto& pair : out) {
        if (!rng.bernoulli(policy.train_subject_prob)) continue;
        erase_scores(pair.baseline_clin, policy.train_erase_per_visit, rng);
        erase_scores(pair.followup_clin, policy.train_erase_per_visit, rng);
    }
    return out;
}

}  // namespace msnn
