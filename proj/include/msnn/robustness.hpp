#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "msnn/cohort.hpp"
#include "msnn/rng.hpp"

namespace msnn {

// Missing-value simulation policy. test_fraction mode erases a fixed share of
// the 8 time-varying scores per visit at evaluation time; train_random mode is
// the per-epoch training augmentation that defines the MultiM variant.
struct NAPolicy {
    enum class Mode { test_fraction, train_random };
    Mode mode = Mode::test_fraction;
    double test_fraction = 0.0;
    double train_subject_prob = 0.10;
    std::size_t train_erase_per_visit = 2;
};

void validate(const NAPolicy& policy);

// Erases round(fraction * 8) scores, chosen uniformly without replacement,
// independently in each of the two vectors. Static attributes are untouched.
// For a fixed rng seed the erase sets are nested across fractions (the
// selection at a lower fraction is a prefix of the one at a higher), so a
// sweep removes information monotonically per subject.
std::pair<ClinicalVector, ClinicalVector> inject_test_na(
    const ClinicalVector& baseline, const ClinicalVector& followup, double fraction,
    Rng& rng);

// Per-epoch MCAR training augmentation: each subject is altered with
// probability policy.train_subject_prob; an altered subject gets
// policy.train_erase_per_visit scores erased in each visit. The input batch is
// not mutated.
std::vector<SubjectPair> train_na_mask(const std::vector<SubjectPair>& batch,
                                       const NAPolicy& policy, Rng& rng);

}  // namespace msnn
