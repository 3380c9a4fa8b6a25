#pragma once

#include <string>
#include <utility>
#include <vector>

namespace msnn {

// Predicted probabilities with their binary labels. Positive class is 1.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;
};

struct ConfusionMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // set when precision or recall had a zero denominator and was defined as 0
    bool degenerate = false;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

struct EvalReport {
    std::string model_name;
    double na_fraction = 0.0;
    ConfusionMetrics confusion;
    RocCurve roc;
};

ConfusionMetrics classification_metrics(const ScoredSet& s, double threshold = 0.5);
RocCurve roc_auc(const ScoredSet& s);

// Mann-Whitney formulation of the AUC (ties credit 0.5). roc_auc must agree
// with this to double precision; they are computed along different routes.
double mann_whitney_auc(const ScoredSet& s);

struct KruskalWallisResult {
    double h = 0.0;
    double p = 1.0;
    std::size_t df = 0;
};

KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

// Survival function (upper tail) of the chi-square distribution, evaluated
// through the regularized incomplete gamma function. Absolute error < 1e-10.
double chi_square_sf(double x, double df);

}  // namespace msnn
