#include <doctest.h>

#include <cmath>
#include <vector>

#include "msnn/error.hpp"
#include "msnn/metrics.hpp"
#include "msnn/rng.hpp"
#include "oracles.hpp"

using namespace msnn;

TEST_CASE("classification_metrics: perfect classifier scores 1.0 everywhere") {
    ScoredSet s;
    s.scores = {0.9, 0.8, 0.1, 0.2};
    s.labels = {1, 1, 0, 0};
    auto m = classification_metrics(s);
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK_FALSE(m.degenerate);
}

TEST_CASE("classification_metrics: constant-positive classifier on a balanced set") {
    ScoredSet s;
    s.scores = {0.9, 0.8, 0.7, 0.6};
    s.labels = {1, 1, 0, 0};
    auto m = classification_metrics(s);
    CHECK(m.recall == 1.0);
    CHECK(m.precision == 0.5);
    CHECK(m.accuracy == 0.5);
}

TEST_CASE("classification_metrics: zero denominators become 0 with the flag set") {
    ScoredSet s;
    s.scores = {0.1, 0.2};
    s.labels = {0, 0};
    auto m = classification_metrics(s);
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);
    CHECK(m.degenerate);
}

TEST_CASE("classification_metrics matches a hand confusion-matrix count on random data") {
    Rng rng(21);
    ScoredSet s;
    for (int i = 0; i < 50; ++i) {
        s.scores.push_back(rng.uniform(0.001, 0.999));
        s.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    int tp = 0, fp = 0, tn = 0, fn = 0;
    for (int i = 0; i < 50; ++i) {
        bool pred = s.scores[static_cast<std::size_t>(i)] >= 0.5;
        bool pos = s.labels[static_cast<std::size_t>(i)] == 1;
        if (pred && pos) ++tp;
        if (pred && !pos) ++fp;
        if (!pred && !pos) ++tn;
        if (!pred && pos) ++fn;
    }
    auto m = classification_metrics(s);
    CHECK(m.accuracy == doctest::Approx((tp + tn) / 50.0));
    if (tp + fp > 0) CHECK(m.precision == doctest::Approx(double(tp) / (tp + fp)));
    if (tp + fn > 0) CHECK(m.recall == doctest::Approx(double(tp) / (tp + fn)));
    if (m.precision + m.recall > 0)
        CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
}

TEST_CASE("roc_auc: perfect separation gives 1, inverted labels give 0") {
    ScoredSet s;
    s.scores = {0.9, 0.8, 0.3, 0.2};
    s.labels = {1, 1, 0, 0};
    CHECK(roc_auc(s).auc == doctest::Approx(1.0));
    s.labels = {0, 0, 1, 1};
    CHECK(roc_auc(s).auc == doctest::Approx(0.0));
}

TEST_CASE("roc_auc: tied pair counts half") {
    ScoredSet s;
    s.scores = {0.5, 0.5, 0.2};
    s.labels = {1, 0, 0};
    CHECK(roc_auc(s).auc == doctest::Approx(0.75));
    CHECK(mann_whitney_auc(s) == doctest::Approx(0.75));
}

TEST_CASE("roc_auc rejects one-class input") {
    ScoredSet s;
    s.scores = {0.5, 0.6};
    s.labels = {1, 1};
    CHECK_THROWS_AS(roc_auc(s), Error);
}

TEST_CASE("roc curve starts at (0,0), ends at (1,1), is monotone") {
    Rng rng(22);
    ScoredSet s;
    for (int i = 0; i < 40; ++i) {
        s.scores.push_back(rng.integer(10) / 10.0 + 0.05);  // force ties
        s.labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
    }
    s.labels[0] = 1;
    s.labels[1] = 0;
    auto curve = roc_auc(s);
    REQUIRE(curve.points.size() >= 2);
    CHECK(curve.points.front().fpr == 0.0);
    CHECK(curve.points.front().tpr == 0.0);
    CHECK(curve.points.back().fpr == doctest::Approx(1.0));
    CHECK(curve.points.back().tpr == doctest::Approx(1.0));
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        CHECK(curve.points[i].fpr >= curve.points[i - 1].fpr);
        CHECK(curve.points[i].tpr >= curve.points[i - 1].tpr);
    }
}

TEST_CASE("trapezoidal AUC equals Mann-Whitney on 1000 random sets with ties") {
    Rng rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(rng.integer(30));
        ScoredSet s;
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            // coarse grid keeps tie probability high
            s.scores.push_back(0.1 + 0.8 * (rng.integer(7) / 6.0));
            int label = rng.bernoulli(0.5) ? 1 : 0;
            s.labels.push_back(label);
            (label ? has1 : has0) = true;
        }
        if (!has0) s.labels[0] = 0;
        if (!has1) s.labels[static_cast<std::size_t>(n) - 1] = 1;
        const double trap = roc_auc(s).auc;
        const double mw = mann_whitney_auc(s);
        const double pairs = oracle::mann_whitney_auc(s.scores, s.labels);
        CHECK(std::fabs(trap - mw) < 1e-12);
        CHECK(std::fabs(trap - pairs) < 1e-12);
    }
}

TEST_CASE("AUC is invariant under strictly monotone score transforms") {
    Rng rng(24);
    ScoredSet s;
    for (int i = 0; i < 30; ++i) {
        s.scores.push_back(rng.uniform(0.01, 0.99));
        s.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    s.labels[0] = 0;
    s.labels[1] = 1;
    const double base = roc_auc(s).auc;
    ScoredSet t = s;
    for (auto& x : t.scores) x = 1.0 / (1.0 + std::exp(-(3.0 * x - 1.0)));
    CHECK(roc_auc(t).auc == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("kruskal_wallis: symmetric identical groups give H = 0") {
    auto r = kruskal_wallis({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
    CHECK(r.h == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("kruskal_wallis: {1,2,3} vs {4,5,6} gives H=3.857, p~0.0495") {
    auto r = kruskal_wallis({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    CHECK(r.h == doctest::Approx(27.0 / 7.0).epsilon(1e-9));
    CHECK(r.df == 1);
    CHECK(r.p == doctest::Approx(0.0495).epsilon(2e-3));
}

TEST_CASE("chi-square survival matches the quadrature oracle") {
    CHECK(std::fabs(chi_square_sf(27.0 / 7.0, 1) - oracle::chi2_sf_quadrature(27.0 / 7.0, 1)) <
          1e-6);
    for (double x : {0.5, 1.0, 2.5, 5.0, 11.07}) {
        for (int df : {1, 2, 3, 5}) {
            CHECK(std::fabs(chi_square_sf(x, df) -
                            oracle::chi2_sf_quadrature(x, df)) < 1e-6);
        }
    }
    // closed form for df=2: exp(-x/2)
    CHECK(chi_square_sf(3.0, 2) == doctest::Approx(std::exp(-1.5)).epsilon(1e-10));
}

TEST_CASE("kruskal_wallis is invariant under monotone transforms") {
    Rng rng(25);
    std::vector<std::vector<double>> groups(3);
    for (auto& g : groups)
        for (int i = 0; i < 8; ++i) g.push_back(rng.uniform(0.0, 4.0));
    auto base = kruskal_wallis(groups);
    for (auto& g : groups)
        for (auto& v : g) v = std::exp(v);
    auto transformed = kruskal_wallis(groups);
    CHECK(transformed.h == doctest::Approx(base.h).epsilon(1e-12));
}

TEST_CASE("kruskal_wallis rejects degenerate input") {
    CHECK_THROWS_AS(kruskal_wallis({{1.0, 1.0}, {1.0, 1.0}}), Error);
    CHECK_THROWS_AS(kruskal_wallis({{1.0}}), Error);
    CHECK_THROWS_AS(kruskal_wallis({{1.0}, {}}), Error);
}
