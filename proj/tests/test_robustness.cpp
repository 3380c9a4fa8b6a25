#include <doctest.h>

#include <cmath>

#include "msnn/error.hpp"
#include "msnn/robustness.hpp"
#include "msnn/rng.hpp"

using namespace msnn;

namespace {

ClinicalVector sample_vector(double fill) {
    ClinicalVector v;
    for (std::size_t k = 0; k < 8; ++k) v.scores[k] = fill + static_cast<double>(k);
    v.statics = {0.5, 1.0, 0.5};
    return v;
}

std::size_t na_count(const ClinicalVector& v) {
    std::size_t n = 0;
    for (auto flag : v.na) n += flag;
    return n;
}

SubjectPair sample_pair(const std::string& id) {
    SubjectPair p;
    p.subject_id = id;
    p.label = 1;
    p.baseline_clin = sample_vector(0.0);
    p.followup_clin = sample_vector(10.0);
    return p;
}

}  // namespace

TEST_CASE("inject_test_na: fraction 0 changes nothing") {
    Rng rng(61);
    auto bl = sample_vector(1.0), fu = sample_vector(2.0);
    auto [b, f] = inject_test_na(bl, fu, 0.0, rng);
    CHECK(b.scores == bl.scores);
    CHECK(f.scores == fu.scores);
    CHECK(na_count(b) == 0);
    CHECK(na_count(f) == 0);
}

TEST_CASE("inject_test_na: the standard fractions map to 1, 2, 3 of 8 per visit") {
    Rng rng(62);
    auto bl = sample_vector(1.0), fu = sample_vector(2.0);
    for (auto [fraction, expected] :
         {std::pair{0.125, std::size_t{1}}, {0.25, std::size_t{2}}, {0.375, std::size_t{3}}}) {
        auto [b, f] = inject_test_na(bl, fu, fraction, rng);
        CHECK(na_count(b) == expected);
        CHECK(na_count(f) == expected);
        for (std::size_t k = 0; k < 8; ++k) {
            if (b.na[k]) CHECK(b.scores[k] == 0.0);
            if (f.na[k]) CHECK(f.scores[k] == 0.0);
        }
    }
}

TEST_CASE("inject_test_na never touches statics and never mutates its input") {
    Rng rng(63);
    auto bl = sample_vector(1.0), fu = sample_vector(2.0);
    const auto bl_before = bl, fu_before = fu;
    auto [b, f] = inject_test_na(bl, fu, 0.375, rng);
    CHECK(b.statics == bl.statics);
    CHECK(f.statics == fu.statics);
    CHECK(bl.scores == bl_before.scores);
    CHECK(fu.scores == fu_before.scores);
    CHECK(na_count(bl) == 0);
}

TEST_CASE("inject_test_na erasure pattern is seed-reproducible") {
    auto bl = sample_vector(1.0), fu = sample_vector(2.0);
    Rng r1(64), r2(64), r3(65);
    auto a = inject_test_na(bl, fu, 0.375, r1);
    auto b = inject_test_na(bl, fu, 0.375, r2);
    auto c = inject_test_na(bl, fu, 0.375, r3);
    CHECK(a.first.na == b.first.na);
    CHECK(a.second.na == b.second.na);
    CHECK((a.first.na != c.first.na || a.second.na != c.second.na));
}

TEST_CASE("inject_test_na erase sets nest as the fraction grows") {
    auto bl = sample_vector(1.0), fu = sample_vector(2.0);
    for (std::uint64_t seed : {70, 71, 72, 73}) {
        Rng r1(seed), r2(seed), r3(seed);
        auto low = inject_test_na(bl, fu, 0.125, r1);
        auto mid = inject_test_na(bl, fu, 0.25, r2);
        auto high = inject_test_na(bl, fu, 0.375, r3);
        auto subset = [](const ClinicalVector& a, const ClinicalVector& b) {
            for (std::size_t k = 0; k < 8; ++k)
                if (a.na[k] && !b.na[k]) return false;
            return true;
        };
        CHECK(subset(low.first, mid.first));
        CHECK(subset(mid.first, high.first));
        CHECK(subset(low.second, mid.second));
        CHECK(subset(mid.second, high.second));
    }
}

TEST_CASE("inject_test_na rejects fractions outside [0,1)") {
    Rng rng(66);
    auto bl = sample_vector(1.0), fu = sample_vector(2.0);
    CHECK_THROWS_AS(inject_test_na(bl, fu, 1.0, rng), Error);
    CHECK_THROWS_AS(inject_test_na(bl, fu, -0.1, rng), Error);
}

TEST_CASE("train_na_mask: probability 0 leaves the batch unchanged") {
    Rng rng(67);
    std::vector<SubjectPair> batch = {sample_pair("A"), sample_pair("B")};
    NAPolicy policy;
    policy.mode = NAPolicy::Mode::train_random;
    policy.train_subject_prob = 0.0;
    auto out = train_na_mask(batch, policy, rng);
    REQUIRE(out.size() == 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].baseline_clin.scores == batch[i].baseline_clin.scores);
        CHECK(na_count(out[i].baseline_clin) == 0);
        CHECK(na_count(out[i].followup_clin) == 0);
    }
}

TEST_CASE("train_na_mask: probability 1 erases exactly 2+2 per subject") {
    Rng rng(68);
    std::vector<SubjectPair> batch = {sample_pair("A"), sample_pair("B"), sample_pair("C")};
    NAPolicy policy;
    policy.mode = NAPolicy::Mode::train_random;
    policy.train_subject_prob = 1.0;
    auto out = train_na_mask(batch, policy, rng);
    for (const auto& pair : out) {
        CHECK(na_count(pair.baseline_clin) == 2);
        CHECK(na_count(pair.followup_clin) == 2);
    }
    // source batch untouched
    for (const auto& pair : batch) {
        CHECK(na_count(pair.baseline_clin) == 0);
        CHECK(na_count(pair.followup_clin) == 0);
    }
}

TEST_CASE("train_na_mask alteration frequency matches the configured probability") {
    Rng rng(69);
    NAPolicy policy;
    policy.mode = NAPolicy::Mode::train_random;
    std::vector<SubjectPair> batch = {sample_pair("A")};
    const int trials = 10000;
    int altered = 0;
    for (int i = 0; i < trials; ++i) {
        auto out = train_na_mask(batch, policy, rng);
        if (na_count(out[0].baseline_clin) > 0) ++altered;
    }
    const double freq = static_cast<double>(altered) / trials;
    const double se = std::sqrt(0.10 * 0.90 / trials);
    CHECK(std::fabs(freq - 0.10) < 3.0 * se);
}

TEST_CASE("train_na_mask rejects a test-mode policy and bad settings") {
    Rng rng(70);
    std::vector<SubjectPair> batch = {sample_pair("A")};
    NAPolicy policy;  // test_fraction mode
    CHECK_THROWS_AS(train_na_mask(batch, policy, rng), Error);
    policy.mode = NAPolicy::Mode::train_random;
    policy.train_erase_per_visit = 9;
    CHECK_THROWS_AS(train_na_mask(batch, policy, rng), Error);
}
