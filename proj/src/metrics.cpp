#include "msnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "msnn/error.hpp"

namespace msnn {

namespace {

void validate(const ScoredSet& s, bool need_both_classes) {
    if (s.scores.empty()) throw data_error("scored set is empty");
    if (s.scores.size() != s.labels.size())
        throw data_error("scored set has " + std::to_string(s.scores.size()) +
                         " scores but " + std::to_string(s.labels.size()) + " labels");
    std::size_t positives = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        if (!std::isfinite(s.scores[i]))
            throw data_error("non-finite score at index " + std::to_string(i));
        if (s.labels[i] != 0 && s.labels[i] != 1)
            throw data_error("label at index " + std::to_string(i) + " is not 0/1");
        positives += static_cast<std::size_t>(s.labels[i]);
    }
    if (need_both_classes && (positives == 0 || positives == s.labels.size()))
        throw data_error("AUC needs both classes present");
}

// mid-ranks of `values` (average rank across ties), 1-based
std::vector<double> mid_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

// lower regularized incomplete gamma P(a,x) by power series
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// upper regularized incomplete gamma Q(a,x) by modified Lentz continued fraction
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 1000; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double chi_square_sf(double x, double df) {
    if (df <= 0.0) throw config_error("chi-square df must be positive");
    if (!std::isfinite(x)) throw data_error("chi-square statistic is not finite");
    if (x <= 0.0) return 1.0;
    const double a = 0.5 * df, half = 0.5 * x;
    if (half < a + 1.0) return 1.0 - gamma_p_series(a, half);
    return gamma_q_cf(a, half);
}

ConfusionMetrics classification_metrics(const ScoredSet& s, double threshold) {
    validate(s, false);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        const bool predicted = s.scores[i] >= threshold;
        if (s.labels[i] == 1)
            predicted ? ++tp : ++fn;
        else
            predicted ? ++fp : ++tn;
    }
    ConfusionMetrics m;
    const double n = static_cast<double>(s.scores.size());
    m.accuracy = static_cast<double>(tp + tn) / n;
    if (tp + fp == 0) {
        m.precision = 0.0;
        m.degenerate = true;
    } else {
        m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
        m.recall = 0.0;
        m.degenerate = true;
    } else {
        m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    m.f1 = (m.precision + m.recall > 0.0)
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

RocCurve roc_auc(const ScoredSet& s) {
    validate(s, true);
    const std::size_t n = s.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });

    double total_pos = 0.0, total_neg = 0.0;
    for (int label : s.labels) (label == 1 ? total_pos : total_neg) += 1.0;

    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    double tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < n) {
        // advance through the whole tie group so equal scores yield one point
        std::size_t j = i;
        while (j < n && s.scores[order[j]] == s.scores[order[i]]) {
            (s.labels[order[j]] == 1 ? tp : fp) += 1.0;
            ++j;
        }
        curve.points.push_back({fp / total_neg, tp / total_pos});
        i = j;
    }

    double auc = 0.0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const auto& a = curve.points[k - 1];
        const auto& b = curve.points[k];
        auc += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
    }
    curve.auc = auc;
    return curve;
}

double mann_whitney_auc(const ScoredSet& s) {
    validate(s, true);
    const auto ranks = mid_ranks(s.scores);
    double rank_sum_pos = 0.0, n_pos = 0.0, n_neg = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (s.labels[i] == 1) {
            rank_sum_pos += ranks[i];
            n_pos += 1.0;
        } else {
            n_neg += 1.0;
        }
    }
    return (rank_sum_pos - n_pos * (n_pos + 1.0) * 0.5) / (n_pos * n_neg);
}

KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw config_error("kruskal_wallis needs at least 2 groups");
    std::vector<double> pooled;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        if (groups[gi].empty())
            throw data_error("kruskal_wallis group " + std::to_string(gi) + " is empty");
        for (double v : groups[gi]) {
            if (!std::isfinite(v)) throw data_error("kruskal_wallis sample is not finite");
            pooled.push_back(v);
        }
    }
    const double n = static_cast<double>(pooled.size());
    const auto ranks = mid_ranks(pooled);

    double h = 0.0;
    std::size_t offset = 0;
    for (const auto& g : groups) {
        double rank_sum = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
        h += rank_sum * rank_sum / static_cast<double>(g.size());
        offset += g.size();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    // tie correction over the pooled sample
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_sum = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    const double correction = 1.0 - tie_sum / (n * n * n - n);
    if (correction == 0.0)
        throw data_error("kruskal_wallis: all samples identical, H undefined");
    h /= correction;

    KruskalWallisResult result;
    result.h = h;
    result.df = groups.size() - 1;
    result.p = chi_square_sf(h, static_cast<double>(result.df));
    return result;
}

}  // namespace msnn
